"""Rooted phylogenies: Newick parsing, serialization, pruning, pairwise depths.

The parser is a hand-rolled recursive descent over the input string so that
every structural error can name the byte offset where it was detected.  Trees
are stored as flat parent/length arrays; tips are the nodes without children.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = [
    "NewickError",
    "UnbalancedParentheses",
    "DuplicateLeafLabel",
    "NegativeBranchLength",
    "MissingBranchLength",
    "EmptyTree",
    "UnknownTip",
    "PhyloTree",
    "PairwiseMrcaDepths",
    "parse_newick",
    "serialize_newick",
    "prune_to",
    "relabel_tips",
    "pairwise_depths",
    "random_tree",
]


class NewickError(DataError):
    """Structural problem in a Newick string or tree."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte {offset})"
        super().__init__(message)
        self.offset = offset


class UnbalancedParentheses(NewickError):
    pass


class DuplicateLeafLabel(NewickError):
    pass


class NegativeBranchLength(NewickError):
    pass


class MissingBranchLength(NewickError):
    pass


class EmptyTree(NewickError):
    pass


class UnknownTip(DataError):
    pass


_DELIMITERS = set("(),:;")


class PhyloTree:
    """Rooted tree with branch lengths.

    Nodes are integer ids ``0 .. n-1``.  ``parent[i]`` is the parent id, or
    ``-1`` for the single root; ``length[i]`` is the length of the branch
    above node ``i`` (0.0 for a root without an explicit length); ``label[i]``
    is the tip label, or None for internal nodes.  Internal node labels from
    the input are discarded at parse time.
    """

    __slots__ = ("parent", "length", "label", "_children")

    def __init__(self, parent, length, label):
        self.parent = np.asarray(parent, dtype=np.int64)
        self.length = np.asarray(length, dtype=np.float64)
        self.label = list(label)
        n = self.parent.size
        if not (self.length.size == n and len(self.label) == n):
            raise NewickError("parent, length, and label arrays disagree in size")
        roots = np.flatnonzero(self.parent < 0)
        if roots.size != 1:
            raise NewickError(f"tree must have exactly one root, found {roots.size}")
        if np.any(~np.isfinite(self.length)) or np.any(self.length < 0):
            raise NegativeBranchLength("branch lengths must be finite and non-negative")
        children: list[list[int]] = [[] for _ in range(n)]
        for i in range(n):
            p = int(self.parent[i])
            if p >= 0:
                children[p].append(i)
        self._children = children
        # reject cycles / unreachable nodes
        seen = 0
        stack = [int(roots[0])]
        visited = np.zeros(n, dtype=bool)
        while stack:
            v = stack.pop()
            if visited[v]:
                raise NewickError("cycle detected in parent array")
            visited[v] = True
            seen += 1
            stack.extend(children[v])
        if seen != n:
            raise NewickError("disconnected nodes in parent array")

    @property
    def n_nodes(self) -> int:
        return int(self.parent.size)

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent < 0)[0])

    def children(self, node: int) -> list[int]:
        return list(self._children[node])

    def is_tip(self, node: int) -> bool:
        return not self._children[node]

    def tips(self) -> list[int]:
        return [i for i in range(self.n_nodes) if not self._children[i]]

    def tip_labels(self) -> list[str]:
        return [self.label[i] for i in self.tips()]

    def depths(self) -> np.ndarray:
        """Root-to-node path length for every node, in input branch units."""
        out = np.zeros(self.n_nodes)
        order = [self.root]
        i = 0
        while i < len(order):
            v = order[i]
            i += 1
            for c in self._children[v]:
                out[c] = out[v] + self.length[c]
                order.append(c)
        return out


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i].isspace():
        i += 1
    return i


def _read_label(text: str, i: int) -> tuple[str, int, int]:
    """Read an optional label starting at i; returns (label, start_offset, next_i)."""
    start = i
    if i < len(text) and text[i] == "'":
        parts = []
        i += 1
        while True:
            if i >= len(text):
                raise NewickError("unterminated quoted label", start)
            ch = text[i]
            if ch == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    parts.append("'")
                    i += 2
                    continue
                i += 1
                break
            parts.append(ch)
            i += 1
        return "".join(parts), start, i
    while i < len(text) and not text[i].isspace() and text[i] not in _DELIMITERS:
        i += 1
    return text[start:i], start, i


def _read_length(text: str, i: int) -> tuple[float | None, int]:
    i = _skip_ws(text, i)
    if i >= len(text) or text[i] != ":":
        return None, i
    i = _skip_ws(text, i + 1)
    start = i
    while i < len(text) and not text[i].isspace() and text[i] not in _DELIMITERS:
        i += 1
    token = text[start:i]
    if not token:
        raise NewickError("':' not followed by a branch length", start)
    try:
        value = float(token)
    except ValueError:
        raise NewickError(f"invalid branch length {token!r}", start) from None
    if not np.isfinite(value):
        raise NewickError(f"non-finite branch length {token!r}", start)
    if value < 0:
        raise NegativeBranchLength(f"negative branch length {token!r}", start)
    return value, i


def parse_newick(text: str) -> PhyloTree:
    """Parse a single rooted Newick tree terminated by ';'.

    Rules: every non-root edge must carry an explicit branch length; a
    missing length on the root edge is treated as 0.  Internal node labels
    are parsed and discarded.  At least two tips are required.
    """
    parent: list[int] = []
    length: list[float] = []
    label: list[str | None] = []
    tip_offsets: dict[str, int] = {}

    def new_node() -> int:
        parent.append(-1)
        length.append(0.0)
        label.append(None)
        return len(parent) - 1

    def parse_node(i: int, depth: int) -> tuple[int, int]:
        i = _skip_ws(text, i)
        if i >= len(text):
            raise UnbalancedParentheses("unexpected end of input", len(text))
        node = new_node()
        if text[i] == "(":
            open_at = i
            i += 1
            while True:
                child, i = parse_node(i, depth + 1)
                parent[child] = node
                i = _skip_ws(text, i)
                if i >= len(text):
                    raise UnbalancedParentheses("unclosed '('", open_at)
                if text[i] == ",":
                    i += 1
                    continue
                if text[i] == ")":
                    i += 1
                    break
                raise UnbalancedParentheses(f"unexpected {text[i]!r} inside group", i)
            # internal label, discarded
            _lbl, _start, i = _read_label(text, _skip_ws(text, i))
            node_end = i
            value, i = _read_length(text, i)
        else:
            lbl, start, i = _read_label(text, i)
            if not lbl:
                raise NewickError(f"expected a node, found {text[i]!r}", i)
            if lbl in tip_offsets:
                raise DuplicateLeafLabel(f"duplicate leaf label {lbl!r}", start)
            tip_offsets[lbl] = start
            label[node] = lbl
            node_end = i
            value, i = _read_length(text, i)
        if value is None:
            if depth > 0:
                raise MissingBranchLength("edge without a branch length", node_end)
            value = 0.0
        length[node] = value
        return node, i

    i = _skip_ws(text, 0)
    if i >= len(text) or text[i] == ";":
        raise EmptyTree("no tree content before ';'", i if i < len(text) else len(text))
    root, i = parse_node(i, 0)
    i = _skip_ws(text, i)
    if i >= len(text) or text[i] != ";":
        if i < len(text) and text[i] == ")":
            raise UnbalancedParentheses("')' without matching '('", i)
        raise NewickError("tree must be terminated by ';'", min(i, len(text)))
    i = _skip_ws(text, i + 1)
    if i < len(text):
        raise NewickError("trailing content after ';'", i)
    tree = PhyloTree(parent, length, label)
    if len(tree.tips()) < 2:
        raise EmptyTree("tree has fewer than 2 tips")
    return tree


def _format_label(lbl: str) -> str:
    if lbl and not any(ch.isspace() or ch in _DELIMITERS or ch == "'" for ch in lbl):
        return lbl
    return "'" + lbl.replace("'", "''") + "'"


def serialize_newick(tree: PhyloTree) -> str:
    """Serialize to Newick with 12 significant digits on branch lengths."""

    def render(node: int) -> str:
        kids = tree.children(node)
        if kids:
            body = "(" + ",".join(render(c) for c in kids) + ")"
        else:
            body = _format_label(tree.label[node] or "")
        return f"{body}:{tree.length[node]:.12g}"

    return render(tree.root) + ";"


def prune_to(tree: PhyloTree, keep) -> PhyloTree:
    """Restrict the tree to the given tip labels.

    Internal nodes left with a single child are suppressed, summing branch
    lengths, so patristic distances among the retained tips are unchanged.
    If the old root becomes unary the tree is re-rooted below it; root branch
    length is reset to 0.
    """
    keep = list(keep)
    keep_set = set(keep)
    if len(keep_set) != len(keep):
        raise UnknownTip("duplicate labels in keep set")
    if len(keep_set) < 2:
        raise EmptyTree("cannot prune to fewer than 2 tips")
    have = {lbl for lbl in tree.label if lbl is not None}
    missing = sorted(keep_set - have)
    if missing:
        raise UnknownTip(f"tips not in tree: {', '.join(missing)}")

    n = tree.n_nodes
    retained = np.zeros(n, dtype=bool)
    for i in range(n):
        if tree.label[i] in keep_set:
            retained[i] = True
    # propagate upward: a node survives if any descendant tip is kept
    order = _postorder(tree)
    for v in order:
        if retained[v] and tree.parent[v] >= 0:
            retained[tree.parent[v]] = True

    new_parent: list[int] = []
    new_length: list[float] = []
    new_label: list[str | None] = []

    def surviving_children(node: int) -> list[int]:
        return [c for c in tree.children(node) if retained[c]]

    # walk down from the old root, skipping unary chains
    def effective_root(node: int) -> int:
        while True:
            kids = surviving_children(node)
            if len(kids) == 1 and tree.label[node] is None:
                node = kids[0]
            else:
                return node

    def copy(node: int, parent_id: int, carried: float) -> None:
        kids = surviving_children(node)
        if len(kids) == 1 and tree.label[node] is None:
            copy(kids[0], parent_id, carried + float(tree.length[kids[0]]))
            return
        nid = len(new_parent)
        new_parent.append(parent_id)
        new_length.append(carried)
        new_label.append(tree.label[node])
        for c in kids:
            copy(c, nid, float(tree.length[c]))

    top = effective_root(tree.root)
    copy(top, -1, 0.0)
    return PhyloTree(new_parent, new_length, new_label)


def relabel_tips(tree: PhyloTree, mapping: dict) -> PhyloTree:
    """Return a copy with tip labels passed through ``mapping`` (others kept)."""
    new_label = [mapping.get(lbl, lbl) if lbl is not None else None for lbl in tree.label]
    tips = [lbl for lbl in new_label if lbl is not None]
    if len(set(tips)) != len(tips):
        raise DuplicateLeafLabel("relabeling collapses two tips onto one label")
    return PhyloTree(tree.parent.copy(), tree.length.copy(), new_label)


def _postorder(tree: PhyloTree) -> list[int]:
    out: list[int] = []
    stack = [tree.root]
    while stack:
        v = stack.pop()
        out.append(v)
        stack.extend(tree.children(v))
    out.reverse()
    return out


@dataclass(frozen=True)
class PairwiseMrcaDepths:
    """Tip depths and most-recent-common-ancestor depths, normalized.

    All depths are divided by the deepest root-to-tip path so the deepest tip
    sits at depth 1; ``tree_depth`` keeps the normalization constant in the
    original branch-length units.  ``mrca_depths[i, i]`` holds the tip's own
    depth.  The pairwise distance between tips h and i reconstructs as
    ``(t_h - k_hi) + (t_i - k_hi)``.
    """

    labels: tuple[str, ...]
    tip_depths: np.ndarray
    mrca_depths: np.ndarray
    tree_depth: float

    def __post_init__(self):
        h = len(self.labels)
        if self.tip_depths.shape != (h,) or self.mrca_depths.shape != (h, h):
            raise DataError("pairwise depth arrays do not match label count")

    @property
    def n(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownTip(f"no tip named {label!r}") from None

    def distances(self) -> np.ndarray:
        """Pairwise patristic distances in normalized units (diagonal 0)."""
        t = self.tip_depths
        return t[:, None] + t[None, :] - 2.0 * self.mrca_depths

    def subset(self, labels) -> "PairwiseMrcaDepths":
        """Rows/columns for the given labels, in that order.

        No renormalization is applied: values stay on the scale of the tree
        these depths came from, so dropping hosts does not change distances.
        """
        idx = np.asarray([self.index_of(lbl) for lbl in labels], dtype=np.int64)
        return PairwiseMrcaDepths(
            labels=tuple(labels),
            tip_depths=self.tip_depths[idx].copy(),
            mrca_depths=self.mrca_depths[np.ix_(idx, idx)].copy(),
            tree_depth=self.tree_depth,
        )


def pairwise_depths(tree: PhyloTree) -> PairwiseMrcaDepths:
    """Compute normalized tip and MRCA depths for every tip pair."""
    depths = tree.depths()
    tip_ids = tree.tips()
    tip_depth = depths[tip_ids]
    total = float(tip_depth.max())
    if total <= 0:
        raise DataError("tree has zero total depth; all branch lengths are 0")

    # root-to-tip paths for pairwise MRCA lookup
    paths: list[list[int]] = []
    for t in tip_ids:
        path = [t]
        while tree.parent[path[-1]] >= 0:
            path.append(int(tree.parent[path[-1]]))
        path.reverse()
        paths.append(path)

    h = len(tip_ids)
    mrca = np.zeros((h, h))
    for a in range(h):
        mrca[a, a] = depths[tip_ids[a]]
        pa = paths[a]
        for b in range(a + 1, h):
            pb = paths[b]
            m = min(len(pa), len(pb))
            common = pa[0]
            for d in range(m):
                if pa[d] != pb[d]:
                    break
                common = pa[d]
            mrca[a, b] = mrca[b, a] = depths[common]

    labels = tuple(tree.label[t] for t in tip_ids)
    return PairwiseMrcaDepths(
        labels=labels,
        tip_depths=tip_depth / total,
        mrca_depths=mrca / total,
        tree_depth=total,
    )


def random_tree(labels, rng: np.random.Generator, jitter: float = 0.0) -> PhyloTree:
    """Random coalescent-style tree over the given tip labels.

    Pairs of lineages merge in random order at exponentially spaced heights,
    giving an ultrametric tree; ``jitter > 0`` multiplies each branch length
    by an independent lognormal factor to break ultrametricity.
    """
    labels = list(labels)
    if len(labels) < 2:
        raise EmptyTree("need at least 2 tips")
    parent: list[int] = []
    length: list[float] = []
    label: list[str | None] = []
    height: list[float] = []
    active: list[int] = []
    for lbl in labels:
        parent.append(-1)
        length.append(0.0)
        label.append(lbl)
        height.append(0.0)
        active.append(len(parent) - 1)
    t = 0.0
    while len(active) > 1:
        k = len(active)
        t += float(rng.exponential(2.0 / (k * (k - 1))))
        i, j = sorted(rng.choice(k, size=2, replace=False))
        a, b = active[i], active[j]
        parent.append(-1)
        length.append(0.0)
        label.append(None)
        height.append(t)
        node = len(parent) - 1
        for c in (a, b):
            parent[c] = node
            length[c] = t - height[c]
        active = [x for x in active if x not in (a, b)] + [node]
    if jitter > 0:
        for i in range(len(length)):
            if parent[i] >= 0:
                length[i] *= float(rng.lognormal(0.0, jitter))
    return PhyloTree(parent, length, label)
