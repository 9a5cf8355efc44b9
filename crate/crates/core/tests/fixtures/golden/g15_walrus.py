import re


def first_number(lines):
    for line in lines:
        if (m := re.search(r"\d+", line)) is not None:
            return int(m.group(0))
    while (line := lines.pop()) and line.strip():
        pass
    return -1
