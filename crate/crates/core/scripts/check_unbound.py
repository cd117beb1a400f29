#!/usr/bin/env python3
"""Report names that are referenced but never bound.

Usage: check_unbound.py FILE...

Prints one diagnostic per unbound name and a final "N errors" line. Exits
non-zero when anything is reported. Syntax errors count as one error.
"""
import builtins
import symtable
import sys

BUILTINS = set(dir(builtins)) | {"__file__", "__name__", "__doc__", "__spec__", "__loader__", "__package__"}


def module_bindings(table):
    return {
        s.get_name()
        for s in table.get_symbols()
        if s.is_assigned() or s.is_imported() or s.is_namespace() or s.is_parameter()
    }


def walk(table, bound, path, out):
    for sym in table.get_symbols():
        if not sym.is_referenced():
            continue
        name = sym.get_name()
        if table.get_type() == "module":
            unbound = name not in bound and name not in BUILTINS
        else:
            unbound = sym.is_global() and name not in bound and name not in BUILTINS
        if unbound:
            out.append(f'{path}:{table.get_lineno()} - error: "{name}" is not defined')
    for child in table.get_children():
        walk(child, bound, path, out)


def check(path):
    with open(path, encoding="utf-8") as f:
        source = f.read()
    try:
        table = symtable.symtable(source, path, "exec")
    except SyntaxError as e:
        return [f"{path}:{e.lineno} - error: {e.msg}"]
    out = []
    walk(table, module_bindings(table), path, out)
    return sorted(set(out))


def main(argv):
    errors = []
    for path in argv[1:]:
        errors.extend(check(path))
    for line in errors:
        print(line)
    print(f"{len(errors)} errors")
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
