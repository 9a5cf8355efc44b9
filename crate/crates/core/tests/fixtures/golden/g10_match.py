def describe(command):
    match command.split():
        case ["go", direction] if direction in ("north", "south") or not direction:
            return "moving " + direction
        case ["quit"]:
            return "bye"
        case _:
            return "unknown"
