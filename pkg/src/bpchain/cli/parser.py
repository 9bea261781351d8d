"""Recursive-descent parser for the map mini-language.

    spec := "example31" | "example34"
          | "trans:" num "," num
          | "rot:" num "," num "," num
          | "scale:" num "," num "," num
          | "inv(" spec ")"
          | "comp(" spec ";" spec ")"      (first after second)
          | "conj(" spec ";" spec ")"

Whitespace between tokens is ignored.
"""
from __future__ import annotations

import math
import re

from ..maps import (Compose, Conjugate, Example31, Example34, Inverse, MapSpecAst, Rotation,
                    Scaling, Translation)

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_WORD = re.compile(r"[A-Za-z][A-Za-z0-9]*")
_ATOMS = {"example31": Example31, "example34": Example34}
_PARAMS = {"trans": (Translation, 2), "rot": (Rotation, 3), "scale": (Scaling, 3)}
_CALLS = ("inv", "comp", "conj")
_HEADS = frozenset(_ATOMS) | {k + ":" for k in _PARAMS} | {k + "(" for k in _CALLS}


class ParseError(ValueError):
    """Syntax error; ``offset`` is a byte offset into the UTF-8 text."""

    def __init__(self, text: str, pos: int, expected) -> None:
        self.offset = len(text[:pos].encode("utf-8"))
        self.expected = frozenset(expected)
        found = text[pos:pos + 12] or "end of input"
        super().__init__(f"at byte {self.offset}: expected one of "
                         f"{', '.join(sorted(self.expected))}; found {found!r}")


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def fail(self, expected) -> ParseError:
        return ParseError(self.text, self.pos, expected)

    def literal(self, tok: str) -> None:
        self.ws()
        if not self.text.startswith(tok, self.pos):
            raise self.fail({tok})
        self.pos += len(tok)

    def number(self) -> float:
        self.ws()
        m = _NUMBER.match(self.text, self.pos)
        if m is None:
            raise self.fail({"number"})
        val = float(m.group())
        if not math.isfinite(val):
            raise self.fail({"finite number"})
        self.pos = m.end()
        return val

    def spec(self) -> MapSpecAst:
        self.ws()
        start = self.pos
        m = _WORD.match(self.text, self.pos)
        word = m.group() if m else None
        if word in _ATOMS:
            self.pos = m.end()
            return _ATOMS[word]()
        if word in _PARAMS:
            self.pos = m.end()
            self.literal(":")
            cls, arity = _PARAMS[word]
            args = [self.number()]
            for _ in range(arity - 1):
                self.literal(",")
                args.append(self.number())
            return cls(*args)
        if word in _CALLS:
            self.pos = m.end()
            self.literal("(")
            a = self.spec()
            if word == "inv":
                self.literal(")")
                return Inverse(a)
            self.literal(";")
            b = self.spec()
            self.literal(")")
            return Compose(a, b) if word == "comp" else Conjugate(a, b)
        self.pos = start
        raise self.fail(_HEADS)


def parse_map_spec(text: str) -> MapSpecAst:
    p = _Parser(text)
    tree = p.spec()
    p.ws()
    if p.pos != len(text):
        raise p.fail({"end of input"})
    return tree


def normalize(text: str) -> str:
    """Canonical spelling of a map spec."""
    return parse_map_spec(text).pretty()
