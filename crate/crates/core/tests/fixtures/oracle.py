"""Reference values for the golden corpus and the maintainability-index tuples.

Uses only the standard tokenizer and ast module, independently of the Rust
implementation. Regenerate with:

    python3 oracle.py > expected.json

With --batch, reads a JSON list of sources on stdin and writes one record per
source (census, blocks and line census) as a JSON list.
"""

import ast
import io
import json
import keyword
import math
import pathlib
import sys
import tokenize

HERE = pathlib.Path(__file__).resolve().parent
OPERAND_KEYWORDS = {"True", "False", "None"}
BRACKETS = {"(": "()", "[": "[]", "{": "{}"}
CLOSERS = {")", "]", "}"}
SKIP = {
    tokenize.NEWLINE,
    tokenize.NL,
    tokenize.INDENT,
    tokenize.DEDENT,
    tokenize.COMMENT,
    tokenize.ENDMARKER,
    tokenize.ENCODING,
}


def soft_keyword_positions(tree):
    """Start positions of `match` and `case` keywords."""
    found = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Match):
            found.add((node.lineno, node.col_offset))
    return found


def logical_lines(tokens):
    line = []
    for tok in tokens:
        if tok.type in (tokenize.NEWLINE, tokenize.ENDMARKER):
            if line:
                yield line
            line = []
        elif tok.type not in (tokenize.NL, tokenize.COMMENT, tokenize.INDENT, tokenize.DEDENT, tokenize.ENCODING):
            line.append(tok)


def classify(source):
    tree = ast.parse(source)
    tokens = list(tokenize.generate_tokens(io.StringIO(source).readline))
    match_starts = soft_keyword_positions(tree)
    soft = set()
    for line in logical_lines(tokens):
        first = line[0]
        if first.type == tokenize.NAME and first.string == "match" and first.start in match_starts:
            soft.add(first.start)
        if first.type == tokenize.NAME and first.string == "case" and line[-1].string == ":" and len(line) > 2:
            soft.add(first.start)
    out = []
    for tok in tokens:
        if tok.type in SKIP:
            continue
        if tok.type == tokenize.NAME:
            if tok.start in soft:
                out.append(("op", tok.string))
            elif keyword.iskeyword(tok.string) and tok.string not in OPERAND_KEYWORDS:
                out.append(("op", tok.string))
            else:
                out.append(("opnd", tok.string))
        elif tok.type in (tokenize.NUMBER, tokenize.STRING):
            out.append(("opnd", tok.string))
        elif tok.type == tokenize.OP:
            if tok.string in CLOSERS:
                continue
            if tok.string == "...":
                out.append(("opnd", "..."))
            else:
                out.append(("op", BRACKETS.get(tok.string, tok.string)))
        else:
            raise ValueError("unexpected token %r" % (tok,))
    merged = []
    for cls, text in out:
        if merged and cls == "op" and merged[-1][0] == "op":
            if merged[-1][1] == "is" and text == "not":
                merged[-1] = ("op", "is not")
                continue
            if merged[-1][1] == "not" and text == "in":
                merged[-1] = ("op", "not in")
                continue
        merged.append((cls, text))
    return merged


def census(source):
    toks = classify(source)
    ops = [t for c, t in toks if c == "op"]
    opnds = [t for c, t in toks if c == "opnd"]
    return {
        "distinct_operators": len(set(ops)),
        "total_operators": len(ops),
        "distinct_operands": len(set(opnds)),
        "total_operands": len(opnds),
    }


def bool_op_count(expr, seen):
    total = 0
    for node in ast.walk(expr):
        if isinstance(node, ast.BoolOp) and id(node) not in seen:
            seen.add(id(node))
            total += len(node.values) - 1
    return total


class Complexity(ast.NodeVisitor):
    def __init__(self):
        self.blocks = []
        self.module = 0
        self.current = None
        self.seen = set()

    def add(self, n):
        if self.current is None:
            self.module += n
        else:
            self.blocks[self.current] += n

    def visit_FunctionDef(self, node):
        saved = self.current
        self.blocks.append(1)
        self.current = len(self.blocks) - 1
        self.generic_visit(node)
        self.current = saved

    visit_AsyncFunctionDef = visit_FunctionDef

    def visit_If(self, node):
        self.add(1 + bool_op_count(node.test, self.seen))
        self.generic_visit(node)

    def visit_While(self, node):
        self.add(1 + bool_op_count(node.test, self.seen))
        self.generic_visit(node)

    def visit_IfExp(self, node):
        self.add(1 + bool_op_count(node.test, self.seen))
        self.generic_visit(node)

    def visit_For(self, node):
        self.add(1)
        self.generic_visit(node)

    visit_AsyncFor = visit_For

    def visit_ExceptHandler(self, node):
        self.add(1)
        self.generic_visit(node)

    def visit_Assert(self, node):
        self.add(1 + bool_op_count(node.test, self.seen))
        self.generic_visit(node)

    def visit_comprehension(self, node):
        for cond in node.ifs:
            self.add(1 + bool_op_count(cond, self.seen))
        self.generic_visit(node)

    def visit_Match(self, node):
        self.add(max(len(node.cases) - 1, 0))
        for case in node.cases:
            if case.guard is not None:
                self.add(bool_op_count(case.guard, self.seen))
        self.generic_visit(node)


def complexity_blocks(source):
    visitor = Complexity()
    visitor.visit(ast.parse(source))
    return visitor.blocks or [1 + visitor.module]


def docstring_rows(tree):
    rows = set()
    bodies = [tree] + [
        n for n in ast.walk(tree) if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef))
    ]
    for owner in bodies:
        if not owner.body:
            continue
        first = owner.body[0]
        if isinstance(first, ast.Expr) and isinstance(first.value, ast.Constant) and isinstance(first.value.value, str):
            rows.update(range(first.lineno - 1, first.end_lineno))
    return rows


def line_census(source):
    lines = source.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    rows = docstring_rows(ast.parse(source))
    for tok in tokenize.generate_tokens(io.StringIO(source).readline):
        if tok.type == tokenize.COMMENT:
            row, col = tok.start
            if lines[row - 1][:col].strip() == "":
                rows.add(row - 1)
    sloc = comments = 0
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        if i in rows:
            comments += 1
        else:
            sloc += 1
    return {"sloc": sloc, "comment_lines": comments, "total_lines": len(lines)}


MI_TUPLES = [
    (100.0, 2.0, 10, 0.0),
    (1.0, 1.0, 1, 0.0),
    (0.0, 1.0, 1, 0.0),
    (0.5, 3.0, 7, 0.25),
    (11.60964047443681, 1.0, 3, 0.0),
    (250.0, 4.5, 25, 0.1),
    (1000.0, 10.0, 120, 0.3),
    (5000.0, 25.0, 400, 0.05),
    (1e9, 100.0, 1000000, 0.0),
    (1e6, 60.0, 50000, 1.0),
    (42.0, 2.0, 6, 0.5),
    (77.7, 1.5, 12, 0.75),
    (3.0, 1.0, 2, 1.0),
    (999.9, 7.25, 88, 0.125),
    (12345.6, 33.3, 777, 0.2),
    (1.0, 0.0, 1, 0.0),
    (64.0, 3.0, 9, 0.4),
    (2.0, 2.0, 2, 0.9),
    (300.0, 5.0, 30, 0.6),
    (1e12, 500.0, 10 ** 7, 0.0),
]


def mi(volume, cc, sloc, ratio):
    raw = 171 - 5.2 * math.log(max(volume, 1.0)) - 0.23 * cc - 16.2 * math.log(sloc) + 50 * math.sin(math.sqrt(2.4 * ratio))
    return max(0.0, 100 * raw / 171)


def measure(source):
    entry = census(source)
    entry["blocks"] = complexity_blocks(source)
    entry.update(line_census(source))
    return entry


def batch():
    sources = json.load(sys.stdin)
    json.dump([measure(s) for s in sources], sys.stdout)


def main():
    if "--batch" in sys.argv:
        batch()
        return
    golden = {}
    for path in sorted((HERE / "golden").glob("*.py")):
        golden[path.name] = measure(path.read_text())
    mi_rows = [{"volume": v, "cc": g, "sloc": l, "comment_ratio": c, "mi": mi(v, g, l, c)} for v, g, l, c in MI_TUPLES]
    json.dump({"golden": golden, "maintainability_index": mi_rows}, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
