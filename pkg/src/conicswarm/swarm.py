"""Particle measures: weighted signed Dirac masses.

A swarm stores a nonnegative weight, a sign in {-1, +1} and a position per
particle. The sign is the lifted second coordinate that lets a signed
measure be treated as a nonnegative one: the feature of a signed particle
is ``sign * phi(position)``, so all conic-descent formulas apply verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Particle", "ParticleSwarm", "lift_signed"]


@dataclass
class Particle:
    weight: float
    sign: int
    position: np.ndarray


class ParticleSwarm:
    """Ordered finite collection of particles, stored as flat arrays."""

    __slots__ = ("weights", "signs", "positions")

    def __init__(self, weights, signs, positions):
        self.weights = np.asarray(weights, dtype=float).reshape(-1).copy()
        self.signs = np.asarray(signs, dtype=float).reshape(-1).copy()
        self.positions = np.asarray(positions, dtype=float).copy()
        if self.positions.ndim == 1:
            self.positions = self.positions.reshape(len(self.weights), -1)
        if self.positions.shape[0] != self.weights.size or self.signs.size != self.weights.size:
            raise ValueError("weights, signs and positions must agree in length")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.positions))):
            raise ValueError("swarm contains non-finite values")
        if np.any(self.weights < 0):
            raise ValueError("particle weights must be nonnegative")
        if self.signs.size and not np.all(np.isin(self.signs, (-1.0, 1.0))):
            raise ValueError("particle signs must be +1 or -1")

    @classmethod
    def empty(cls, dim: int) -> "ParticleSwarm":
        return cls(np.empty(0), np.empty(0), np.empty((0, dim)))

    @classmethod
    def from_particles(cls, particles, dim: int | None = None) -> "ParticleSwarm":
        particles = list(particles)
        if not particles:
            if dim is None:
                raise ValueError("dim required for an empty particle list")
            return cls.empty(dim)
        return cls(
            np.array([p.weight for p in particles]),
            np.array([p.sign for p in particles]),
            np.array([np.asarray(p.position, dtype=float) for p in particles]),
        )

    def __len__(self):
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def tv_norm(self) -> float:
        """Total variation norm: the sum of (lifted, nonnegative) weights."""
        return float(self.weights.sum()) if len(self) else 0.0

    def prune_zero(self, floor: float = 0.0) -> "ParticleSwarm":
        """Drop particles with weight <= floor, preserving survivor order."""
        if floor < 0:
            raise ValueError("floor must be nonnegative")
        keep = self.weights > floor
        return ParticleSwarm(self.weights[keep], self.signs[keep], self.positions[keep])

    def particles(self):
        return [Particle(float(w), int(s), p.copy())
                for w, s, p in zip(self.weights, self.signs, self.positions)]

    def copy(self) -> "ParticleSwarm":
        return ParticleSwarm(self.weights, self.signs, self.positions)

    def appended(self, particles) -> "ParticleSwarm":
        """New swarm with the given particles appended in order."""
        particles = list(particles)
        if not particles:
            return self.copy()
        extra = ParticleSwarm.from_particles(particles, dim=self.dim)
        return ParticleSwarm(
            np.concatenate([self.weights, extra.weights]),
            np.concatenate([self.signs, extra.signs]),
            np.vstack([self.positions, extra.positions]),
        )

    def to_csv(self, path) -> None:
        """Write ``weight,sign,x0,...,x{d-1}`` rows, one particle per line."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            cols = ",".join(f"x{i}" for i in range(self.dim))
            fh.write(f"weight,sign,{cols}\n" if self.dim else "weight,sign\n")
            for w, s, p in zip(self.weights, self.signs, self.positions):
                coords = ",".join(repr(float(c)) for c in p)
                fh.write(f"{float(w)!r},{int(s)},{coords}\n")

    @classmethod
    def from_csv(cls, path) -> "ParticleSwarm":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if header[:2] != ["weight", "sign"]:
                raise ValueError(f"unexpected swarm CSV header: {header}")
            dim = len(header) - 2
            weights, signs, positions = [], [], []
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != dim + 2:
                    raise ValueError(f"swarm CSV row has {len(parts)} fields, expected {dim + 2}")
                weights.append(float(parts[0]))
                signs.append(float(parts[1]))
                positions.append([float(v) for v in parts[2:]])
        return cls(np.array(weights), np.array(signs),
                   np.array(positions).reshape(len(weights), dim))

    def __repr__(self):
        return f"ParticleSwarm(p={len(self)}, dim={self.dim}, tv={self.tv_norm():.6g})"


def lift_signed(signed_weights, positions) -> ParticleSwarm:
    """Lift a signed atomic measure ``sum_j a_j delta_{x_j}`` to a swarm.

    Each atom ``a * delta_x`` becomes a particle with weight ``|a|`` and
    sign ``sign(a)``. Zero-weight atoms are dropped.
    """
    a = np.asarray(signed_weights, dtype=float).reshape(-1)
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos.reshape(a.size, -1)
    if pos.shape[0] != a.size:
        raise ValueError("signed weights and positions must agree in length")
    keep = a != 0.0
    return ParticleSwarm(np.abs(a[keep]), np.sign(a[keep]), pos[keep])
