import json
import os
import sys


def _deny_network():
    import socket

    def refuse(*args, **kwargs):
        raise PermissionError("network access is disabled")

    class NoSocket:
        def __init__(self, *args, **kwargs):
            refuse()

    socket.socket = NoSocket
    socket.create_connection = refuse
    socket.socketpair = refuse
    socket.fromfd = refuse
    try:
        import _socket
        _socket.socket = NoSocket
    except ImportError:
        pass


def _emit(out, record):
    out.write(json.dumps(record) + "\n")
    out.flush()


def _failure(exc, index):
    return {"error": type(exc).__name__, "test": index, "message": str(exc)[:2000]}


def main():
    out = os.fdopen(os.dup(1), "w")
    os.dup2(2, 1)
    try:
        job = json.loads(sys.stdin.read())
        source = job["source"]
        tests = job["tests"]
        if not isinstance(source, str) or not isinstance(tests, list):
            raise ValueError("bad job fields")
    except Exception as exc:
        _emit(out, {"error": "ProtocolError", "test": -1, "message": str(exc)})
        return 3
    instrument = bool(job.get("instrument"))
    executed = set()

    def tracer(frame, event, arg):
        if frame.f_code.co_filename != "<candidate>":
            return None
        if event == "line":
            executed.add(frame.f_lineno)
        return tracer

    _deny_network()
    namespace = {"__name__": "__candidate__"}
    if instrument:
        sys.settrace(tracer)
    try:
        try:
            code = compile(source, "<candidate>", "exec")
        except SyntaxError as exc:
            record = {"error": "SyntaxError", "test": -1, "message": str(exc)}
        else:
            record = None
            try:
                exec(code, namespace)
            except BaseException as exc:
                record = _failure(exc, -1)
            if record is None:
                for index, test in enumerate(tests):
                    sys.stderr.write("__runner_test__ %d\n" % index)
                    sys.stderr.flush()
                    try:
                        exec(compile(test, "<test %d>" % index, "exec"), namespace)
                    except BaseException as exc:
                        record = _failure(exc, index)
                        break
            if record is None:
                record = {"ok": True}
    finally:
        sys.settrace(None)
    if instrument:
        record["lines"] = sorted(executed)
    _emit(out, record)
    return 0


if __name__ == "__main__":
    sys.exit(main())
