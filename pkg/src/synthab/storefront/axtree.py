"""Accessibility-tree nodes, their text serialization, and an HTML snapshot parser."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Any

from ..errors import SynthABError

ROLES = ("heading", "link", "button", "textbox", "listitem", "text", "region")
INTERACTIVE = frozenset({"link", "button", "textbox"})


class UnparseableDocument(SynthABError):
    pass


@dataclass(slots=True)
class AccessibilityNode:
    role: str
    name: str = ""
    ref: str | None = None
    children: list["AccessibilityNode"] = field(default_factory=list)
    # what activating the element does; never serialized
    target: Any = field(default=None, compare=False, repr=False)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def interactive(self) -> list["AccessibilityNode"]:
        return [n for n in self.walk() if n.role in INTERACTIVE]

    def find(self, ref: str) -> "AccessibilityNode | None":
        for node in self.walk():
            if node.ref == ref:
                return node
        return None

    def to_json(self) -> dict:
        out: dict = {"role": self.role, "name": self.name}
        if self.ref is not None:
            out["ref"] = self.ref
        if self.children:
            out["children"] = [c.to_json() for c in self.children]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "AccessibilityNode":
        return cls(
            role=obj["role"],
            name=obj.get("name", ""),
            ref=obj.get("ref"),
            children=[cls.from_json(c) for c in obj.get("children", [])],
        )


def serialize(node: AccessibilityNode, indent: int = 0) -> str:
    """Indented ``role "name" [ref=eN]`` lines, the form prompts and logs use."""
    lines: list[str] = []
    _serialize(node, indent, lines)
    return "\n".join(lines)


def _serialize(node: AccessibilityNode, depth: int, out: list[str]) -> None:
    line = "  " * depth + f'{node.role} "{node.name}"'
    if node.ref is not None:
        line += f" [ref={node.ref}]"
    out.append(line)
    for child in node.children:
        _serialize(child, depth + 1, out)


def assign_refs(root: AccessibilityNode, prefix: str = "e") -> dict[str, AccessibilityNode]:
    """Number interactive nodes in document (pre-)order: e1, e2, ..."""
    refs = {}
    for node in root.walk():
        if node.role in INTERACTIVE:
            node.ref = f"{prefix}{len(refs) + 1}"
            refs[node.ref] = node
        else:
            node.ref = None
    return refs


# --- HTML snapshots -------------------------------------------------------

_VOID = {
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
}
_DROP = {"script", "style", "template", "noscript", "head", "svg", "select"}
_REGION_TAGS = {"nav", "main", "header", "footer", "section", "aside", "form", "article"}
_HEADINGS = {"h1", "h2", "h3", "h4", "h5", "h6"}
_INLINE = {"b", "i", "em", "strong", "span", "small", "u", "mark", "code", "sup", "sub", "abbr", "label", "time", "s"}
_TEXTBOX_TYPES = {"text", "search", "email", "tel", "url", ""}
_BUTTON_TYPES = {"submit", "button", "reset"}
_WS = re.compile(r"\s+")


@dataclass
class _El:
    tag: str
    attrs: dict[str, str]
    children: list = field(default_factory=list)  # _El or str


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = _El("#document", {})
        self.stack = [self.root]
        self.skip_depth = 0
        self.title = ""
        self._in_title = False

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        if tag == "title":
            self._in_title = True
        if self.skip_depth:
            if tag not in _VOID:
                self.skip_depth += 1
            return
        if tag in _DROP:
            if tag not in _VOID:
                self.skip_depth = 1
            return
        el = _El(tag, {k.lower(): (v or "") for k, v in attrs})
        self.stack[-1].children.append(el)
        if tag not in _VOID:
            self.stack.append(el)

    def handle_startendtag(self, tag, attrs):
        tag = tag.lower()
        if self.skip_depth or tag in _DROP:
            return
        self.stack[-1].children.append(_El(tag, {k.lower(): (v or "") for k, v in attrs}))

    def handle_endtag(self, tag):
        tag = tag.lower()
        if tag == "title":
            self._in_title = False
        if self.skip_depth:
            if tag not in _VOID:
                self.skip_depth -= 1
            return
        # tolerate unbalanced markup: close up to the nearest matching open tag
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return

    def handle_data(self, data):
        if self._in_title:
            self.title += data
            return
        if self.skip_depth:
            return
        self.stack[-1].children.append(data)


def _text_of(el: _El) -> str:
    parts: list[str] = []

    def rec(e):
        for c in e.children:
            if isinstance(c, str):
                parts.append(c)
            else:
                rec(c)

    rec(el)
    return _WS.sub(" ", " ".join(parts)).strip()


def _alt_of(el: _El) -> str:
    if el.attrs.get("alt"):
        return el.attrs["alt"].strip()
    for c in el.children:
        if isinstance(c, _El):
            alt = _alt_of(c)
            if alt:
                return alt
    return ""


def _name_of(el: _El) -> str:
    return _text_of(el) or el.attrs.get("aria-label", "").strip() or _alt_of(el)


def _interactive_descendants(el: _El) -> list[AccessibilityNode]:
    out: list[AccessibilityNode] = []
    for c in el.children:
        if isinstance(c, _El):
            out.extend(_convert(c, nested=True))
    return out


def _convert(el: _El, nested: bool = False) -> list[AccessibilityNode]:
    """Map one element to zero or more nodes; ``nested`` keeps only interactive ones."""
    tag = el.tag
    if el.attrs.get("aria-hidden") == "true" or "hidden" in el.attrs:
        return []
    if tag == "a":
        return [AccessibilityNode("link", _name_of(el))]
    if tag == "button":
        return [AccessibilityNode("button", _name_of(el))]
    if tag == "input":
        itype = el.attrs.get("type", "").lower()
        if itype in _BUTTON_TYPES:
            name = el.attrs.get("value") or el.attrs.get("aria-label") or el.attrs.get("alt") or itype
            return [AccessibilityNode("button", name.strip())]
        if itype in _TEXTBOX_TYPES:
            name = el.attrs.get("aria-label") or el.attrs.get("placeholder") or el.attrs.get("name", "")
            return [AccessibilityNode("textbox", name.strip())]
        return []
    if tag == "textarea":
        name = el.attrs.get("aria-label") or el.attrs.get("placeholder") or el.attrs.get("name", "")
        return [AccessibilityNode("textbox", name.strip())]
    if nested and tag not in _HEADINGS:
        return _interactive_descendants(el)
    if tag in _HEADINGS:
        node = AccessibilityNode("heading", _name_of(el))
        node.children = _interactive_descendants(el)
        return [node]
    children = _convert_children(el)
    if tag == "li":
        return [AccessibilityNode("listitem", el.attrs.get("aria-label", "").strip(), children=children)]
    if tag in _REGION_TAGS:
        return [AccessibilityNode("region", el.attrs.get("aria-label", "").strip(), children=children)]
    return children


def _convert_children(el: _El) -> list[AccessibilityNode]:
    out: list[AccessibilityNode] = []
    # text runs split only by inline markup collapse into one text node
    joinable = False
    for c in el.children:
        if isinstance(c, str):
            text = _WS.sub(" ", c).strip()
            if not text:
                continue
            nodes = [AccessibilityNode("text", text)]
            inline = True
        else:
            nodes = _convert(c)
            inline = c.tag in _INLINE
        for node in nodes:
            if joinable and inline and node.role == "text" and out and out[-1].role == "text":
                out[-1].name = f"{out[-1].name} {node.name}"
            else:
                out.append(node)
        joinable = inline and bool(out) and out[-1].role == "text"
    return out


def parse_html_to_axtree(html: str) -> AccessibilityNode:
    """Error-tolerant HTML -> accessibility tree.

    Headings, links, buttons, text inputs and list items keep their roles;
    landmark elements become regions; generic containers are flattened away.
    Names come from text content, then ``aria-label``, then ``alt``.
    """
    if html is None or not html.strip() or "\x00" in html:
        raise UnparseableDocument("document is empty or binary")
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    root = AccessibilityNode("region", _WS.sub(" ", builder.title).strip(), children=_convert_children(builder.root))
    assign_refs(root)
    return root
