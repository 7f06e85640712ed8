"""Small Newick writing helpers shared by the treelet and HC dendrograms."""

import re

_PLAIN = re.compile(r"^[A-Za-z0-9_.\-]+$")


def quote(name):
    if _PLAIN.match(name):
        return name
    return "'" + name.replace("'", "''") + "'"


def annotation(**fields):
    """NHX-style bracket comment: ``[&&NHX:k1=v1:k2=v2]``."""
    body = ":".join(f"{k}={v}" for k, v in fields.items())
    return f"[&&NHX:{body}]"


def comment(text):
    return "[" + text.replace("[", "%5B").replace("]", "%5D") + "]"


def finish(roots, header=None):
    """Join one or more root subtrees into a terminated Newick string."""
    tree = roots[0] if len(roots) == 1 else "(" + ",".join(roots) + ")"
    prefix = comment(header) if header else ""
    return prefix + tree + ";"
