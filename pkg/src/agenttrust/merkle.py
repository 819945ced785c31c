"""Binary SHA-256 Merkle tree; an odd node at any level is paired with itself."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .crypto import digest


def _parent(left: bytes, right: bytes) -> bytes:
    return digest(left + right)


def merkle_levels(leaves: Sequence[bytes]) -> list[list[bytes]]:
    if not leaves:
        raise ValueError("a Merkle tree needs at least one leaf")
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        level = levels[-1]
        if len(level) % 2:
            level = level + [level[-1]]
        levels.append([_parent(level[i], level[i + 1]) for i in range(0, len(level), 2)])
    return levels


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    return merkle_levels(leaves)[-1][0]


@dataclass(frozen=True)
class InclusionProof:
    leaf_index: int
    # (sibling digest, sibling is on the right)
    path: tuple[tuple[bytes, bool], ...]

    def to_dict(self) -> dict:
        return {
            "leafIndex": self.leaf_index,
            "path": [{"hash": h.hex(), "position": "right" if right else "left"} for h, right in self.path],
        }

    @classmethod
    def from_dict(cls, data: dict) -> InclusionProof:
        return cls(
            data["leafIndex"],
            tuple((bytes.fromhex(p["hash"]), p["position"] == "right") for p in data["path"]),
        )


def inclusion_proof(leaves: Sequence[bytes], index: int) -> InclusionProof:
    if not 0 <= index < len(leaves):
        raise IndexError(index)
    path = []
    idx = index
    for level in merkle_levels(leaves)[:-1]:
        if len(level) % 2:
            level = level + [level[-1]]
        if idx % 2 == 0:
            path.append((level[idx + 1], True))
        else:
            path.append((level[idx - 1], False))
        idx //= 2
    return InclusionProof(index, tuple(path))


def verify_inclusion(root: bytes, leaf_digest: bytes, proof: InclusionProof) -> bool:
    node = leaf_digest
    for sibling, sibling_right in proof.path:
        node = _parent(node, sibling) if sibling_right else _parent(sibling, node)
    return node == root
