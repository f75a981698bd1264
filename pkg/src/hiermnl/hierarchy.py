"""Rooted class hierarchies: parsing, validation, and branch/path indexing.

A hierarchy arranges the classes of a classification problem at the leaves
of an ordered rooted tree. Internal nodes group classes that are expected
to behave similarly; every edge (branch) of the tree can carry its own
parameter vector in the tree-structured models.

Text format
-----------
Nested parentheses with comma separators::

    tree := node
    node := leaf | '(' node (',' node)+ ')'
    leaf := token | '"' chars '"'

Whitespace outside quotes is insignificant. Bare tokens may contain any
character except whitespace and the delimiters ``( ) , "``. Labels that do
contain such characters must be written in double quotes. The format has
no escape sequence, so a label may not contain a double quote itself.

``"((1,2),(3,4))"`` describes four classes in two groups of two: a root
with two internal children, six branches in total. ``"(a,b,c)"`` is the
flat (depth-one) hierarchy on three classes.

Indexing conventions
--------------------
Internal nodes are indexed in preorder with the root at index 0. Branches
are indexed densely 0..B-1, grouped per node: node m's outgoing branches
occupy a contiguous block, nodes in index order. Class indices follow the
left-to-right order of the leaves in the text.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HierarchyError",
    "Branch",
    "ClassHierarchy",
    "parse_hierarchy",
    "serialize_hierarchy",
    "flat_hierarchy",
    "leaf_path",
    "is_flat",
]

_DELIMITERS = frozenset('(),"')


class HierarchyError(ValueError):
    """Invalid hierarchy text or structure.

    For syntax errors, ``position`` is the 0-based character offset into
    the input text; it is None for structural errors.
    """

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (character {position})"
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class Branch:
    """One edge of the hierarchy: child slot ``slot`` of internal node ``parent``."""

    parent: int
    slot: int


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Split hierarchy text into (kind, value, position) tokens.

    kind is one of '(', ')', ',' or 'label'.
    """
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "(),":
            tokens.append((ch, ch, i))
            i += 1
        elif ch == '"':
            end = text.find('"', i + 1)
            if end < 0:
                raise HierarchyError("unterminated quoted label", i)
            tokens.append(("label", text[i + 1 : end], i))
            i = end + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in _DELIMITERS:
                j += 1
            tokens.append(("label", text[i:j], i))
            i = j
    return tokens


def _parse_node(tokens: list[tuple[str, str, int]], pos: int):
    """Recursive-descent parse starting at token index ``pos``.

    Returns (structure, next_pos) where structure is ("leaf", label, offset)
    or ("node", [children], offset).
    """
    if pos >= len(tokens):
        raise HierarchyError("unexpected end of input", tokens[-1][2] + 1 if tokens else 0)
    kind, value, offset = tokens[pos]
    if kind == "label":
        return ("leaf", value, offset), pos + 1
    if kind != "(":
        raise HierarchyError(f"expected a label or '(', found {value!r}", offset)
    children = []
    child, pos = _parse_node(tokens, pos + 1)
    children.append(child)
    while True:
        if pos >= len(tokens):
            raise HierarchyError("unexpected end of input, expected ',' or ')'", offset)
        kind, value, off = tokens[pos]
        if kind == ",":
            child, pos = _parse_node(tokens, pos + 1)
            children.append(child)
        elif kind == ")":
            if len(children) < 2:
                raise HierarchyError("internal node needs at least 2 children", off)
            return ("node", children, offset), pos + 1
        else:
            raise HierarchyError(f"expected ',' or ')', found {value!r}", off)


class ClassHierarchy:
    """Immutable indexed view of a class hierarchy.

    Construct via :func:`parse_hierarchy` or :func:`flat_hierarchy`. The
    instance precomputes every lookup the models need: per-node child
    lists, the dense branch table, root-to-leaf branch paths, the branch
    membership matrix, and per-branch descendant class sets.
    """

    def __init__(self, root_struct):
        if root_struct[0] != "node":
            raise HierarchyError("root must be an internal node with at least two classes")

        children: list[list[tuple[str, int]]] = []
        node_parent: list[tuple[int, int] | None] = []
        labels: list[str] = []
        leaf_parent: list[tuple[int, int]] = []

        def walk(struct, parent_ref):
            idx = len(children)
            children.append([])
            node_parent.append(parent_ref)
            refs = children[idx]
            for slot, child in enumerate(struct[1]):
                if child[0] == "leaf":
                    label = child[1]
                    if label == "":
                        raise HierarchyError("empty class label", child[2])
                    if '"' in label:
                        raise HierarchyError(
                            "class label may not contain a double quote", child[2]
                        )
                    if label in labels:
                        raise HierarchyError(f"duplicate class label {label!r}", child[2])
                    refs.append(("leaf", len(labels)))
                    labels.append(label)
                    leaf_parent.append((idx, slot))
                else:
                    refs.append(("node", walk(child, (idx, slot))))
            return idx

        walk(root_struct, None)

        self._children: tuple[tuple[tuple[str, int], ...], ...] = tuple(
            tuple(refs) for refs in children
        )
        self._node_parent = tuple(node_parent)
        self._labels = tuple(labels)
        self._label_index = {lab: j for j, lab in enumerate(labels)}
        self._leaf_parent = tuple(leaf_parent)

        # Dense branch table: node m's branches form a contiguous block.
        branches: list[Branch] = []
        branch_of: list[list[int]] = []
        for m, refs in enumerate(self._children):
            row = []
            for k in range(len(refs)):
                row.append(len(branches))
                branches.append(Branch(m, k))
            branch_of.append(row)
        self._branches = tuple(branches)
        self._branch_of = tuple(tuple(row) for row in branch_of)

        # Root-to-node branch paths; parents precede children in preorder.
        node_path: list[tuple[int, ...]] = []
        for m in range(len(self._children)):
            parent = self._node_parent[m]
            if parent is None:
                node_path.append(())
            else:
                pm, pk = parent
                node_path.append(node_path[pm] + (self._branch_of[pm][pk],))
        self._node_path = tuple(node_path)
        self._paths = tuple(
            self._node_path[m] + (self._branch_of[m][k],) for m, k in leaf_parent
        )

        # Descendant class indices per child slot, computed bottom-up.
        slot_classes: list[list[tuple[int, ...]]] = [[] for _ in self._children]
        for m in range(len(self._children) - 1, -1, -1):
            for kind, ref in self._children[m]:
                if kind == "leaf":
                    slot_classes[m].append((ref,))
                else:
                    merged: tuple[int, ...] = ()
                    for grp in slot_classes[ref]:
                        merged += grp
                    slot_classes[m].append(merged)
        self._slot_classes = tuple(tuple(row) for row in slot_classes)

        mat = np.zeros((len(self._branches), len(self._labels)))
        for j, path in enumerate(self._paths):
            mat[list(path), j] = 1.0
        mat.setflags(write=False)
        self._path_matrix = mat

    # -- basic counts ---------------------------------------------------

    @property
    def n_classes(self) -> int:
        return len(self._labels)

    @property
    def n_internal(self) -> int:
        return len(self._children)

    @property
    def n_branches(self) -> int:
        return len(self._branches)

    @property
    def labels(self) -> tuple[str, ...]:
        """Class labels in index order (left-to-right leaf order)."""
        return self._labels

    @property
    def branches(self) -> tuple[Branch, ...]:
        return self._branches

    # -- lookups ----------------------------------------------------------

    def class_index(self, label: str) -> int:
        try:
            return self._label_index[label]
        except KeyError:
            raise HierarchyError(f"unknown class label {label!r}") from None

    def children(self, m: int) -> tuple[tuple[str, int], ...]:
        """Ordered child references of node m: ('leaf', class index) or ('node', node index)."""
        return self._children[m]

    def n_children(self, m: int) -> int:
        return len(self._children[m])

    def branch_index(self, m: int, k: int) -> int:
        return self._branch_of[m][k]

    def node_depth(self, m: int) -> int:
        return len(self._node_path[m])

    def leaf_path(self, label: str) -> tuple[int, ...]:
        """Branch indices from the root to the leaf carrying ``label``."""
        return self._paths[self.class_index(label)]

    def path_of_class(self, j: int) -> tuple[int, ...]:
        return self._paths[j]

    def leaf_depths(self) -> tuple[int, ...]:
        """Depth of each leaf, in class-index order."""
        return tuple(len(path) for path in self._paths)

    def slot_classes(self, m: int) -> tuple[tuple[int, ...], ...]:
        """Class indices reachable through each child slot of node m."""
        return self._slot_classes[m]

    def branch_classes(self, b: int) -> tuple[int, ...]:
        """Class indices whose leaf path passes through branch b."""
        br = self._branches[b]
        return self._slot_classes[br.parent][br.slot]

    def path_matrix(self) -> np.ndarray:
        """Read-only (B, c) indicator matrix; entry (b, j) is 1 when branch b lies on class j's path."""
        return self._path_matrix

    @property
    def is_flat(self) -> bool:
        """True when every leaf hangs directly off the root."""
        return self.n_internal == 1

    # -- text form ----------------------------------------------------------

    def serialize(self) -> str:
        """Render back to the nested-parentheses text format; inverse of parse."""

        def render(ref) -> str:
            kind, idx = ref
            if kind == "leaf":
                return _render_label(self._labels[idx])
            return "(" + ",".join(render(r) for r in self._children[idx]) + ")"

        return "(" + ",".join(render(r) for r in self._children[0]) + ")"

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClassHierarchy):
            return NotImplemented
        return self._labels == other._labels and self._children == other._children

    def __hash__(self) -> int:
        return hash((self._labels, self._children))

    def __repr__(self) -> str:
        return (
            f"ClassHierarchy({self.n_classes} classes, {self.n_internal} internal "
            f"nodes, {self.n_branches} branches)"
        )


def _render_label(label: str) -> str:
    if any(ch in _DELIMITERS or ch.isspace() for ch in label):
        return f'"{label}"'
    return label


def parse_hierarchy(text: str) -> ClassHierarchy:
    """Parse hierarchy text into a validated :class:`ClassHierarchy`.

    Raises :class:`HierarchyError` (with character position) on syntax
    errors, duplicate or empty labels, trailing input, or a bare-leaf root.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise HierarchyError("empty hierarchy text", 0)
    struct, pos = _parse_node(tokens, 0)
    if pos != len(tokens):
        raise HierarchyError(
            f"unexpected trailing input {tokens[pos][1]!r}", tokens[pos][2]
        )
    return ClassHierarchy(struct)


def serialize_hierarchy(h: ClassHierarchy) -> str:
    """Text form of ``h``; ``parse_hierarchy(serialize_hierarchy(h)) == h``."""
    return h.serialize()


def flat_hierarchy(labels) -> ClassHierarchy:
    """Depth-one hierarchy whose classes are ``labels`` in the given order."""
    labels = list(labels)
    if len(labels) < 2:
        raise HierarchyError("a hierarchy needs at least two classes")
    struct = ("node", [("leaf", str(lab), i) for i, lab in enumerate(labels)], 0)
    return ClassHierarchy(struct)


def leaf_path(h: ClassHierarchy, label: str) -> tuple[int, ...]:
    """Branch indices from the root of ``h`` to the leaf carrying ``label``."""
    return h.leaf_path(label)


def is_flat(h: ClassHierarchy) -> bool:
    """True when every leaf of ``h`` has depth one."""
    return h.is_flat
