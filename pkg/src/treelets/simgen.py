"""Synthetic data with known dependence structure.

Three regimes:

* block model: independent equicorrelated Gaussian blocks ("pathways"),
* global factor: the block model plus one latent factor shared by all variables,
* driver/modulator: raw-scale multiplicative dependence, lognormal throughout.

Random-stream layout is part of the contract. For the block model each sample
draws, in order, for every block its shared factor followed by the block's
per-variable terms, and then p noise terms. The global factor draws one
value per sample after the whole block draw. A global loading of 0 therefore
reproduces the block model bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LOG, RAW, DataMatrix
from .errors import InvalidSpec, NonPositiveEntry


@dataclass(frozen=True)
class Block:
    size: int
    rho: float


@dataclass(frozen=True)
class BlockModelSpec:
    seed: int
    n: int
    blocks: tuple
    noise_sd: float = 0.0
    p: int | None = None

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, Block) else Block(**b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)

    @property
    def total_p(self):
        return sum(b.size for b in self.blocks)

    def validate(self):
        _check_int("seed", self.seed)
        _check_int("n", self.n, minimum=1)
        if not self.blocks:
            raise InvalidSpec("blocks", "at least one block is required")
        for k, b in enumerate(self.blocks):
            _check_int(f"blocks[{k}].size", b.size, minimum=1)
            if not (isinstance(b.rho, (int, float)) and 0.0 <= b.rho < 1.0):
                raise InvalidSpec(f"blocks[{k}].rho", f"must lie in [0, 1), got {b.rho!r}")
        if not (isinstance(self.noise_sd, (int, float)) and self.noise_sd >= 0 and math.isfinite(self.noise_sd)):
            raise InvalidSpec("noise_sd", f"must be a finite number >= 0, got {self.noise_sd!r}")
        if self.p is not None and self.p != self.total_p:
            raise InvalidSpec("p", f"declared p={self.p} but block sizes sum to {self.total_p}")


@dataclass(frozen=True)
class GlobalFactorSpec:
    block: BlockModelSpec
    global_loading: float = 0.0

    def validate(self):
        self.block.validate()
        g = self.global_loading
        if not (isinstance(g, (int, float)) and g >= 0 and math.isfinite(g)):
            raise InvalidSpec("global_loading", f"must be a finite number >= 0, got {g!r}")


@dataclass(frozen=True)
class DriverModulatorSpec:
    seed: int
    n: int
    drivers: int
    modulators_per_driver: int
    log_driver_sd: float = 1.0
    log_factor_sd: float = 1.0

    def validate(self):
        _check_int("seed", self.seed)
        _check_int("n", self.n, minimum=1)
        _check_int("drivers", self.drivers, minimum=1)
        _check_int("modulators_per_driver", self.modulators_per_driver, minimum=1)
        for name in ("log_driver_sd", "log_factor_sd"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise InvalidSpec(name, f"must be a finite number > 0, got {v!r}")


def _check_int(name, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise InvalidSpec(name, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise InvalidSpec(name, f"must be >= {minimum}, got {value}")


def _block_labels(spec):
    return [k for k, b in enumerate(spec.blocks) for _ in range(b.size)]


def _block_names(spec):
    return [f"b{k}_g{i}" for k, b in enumerate(spec.blocks) for i in range(b.size)]


def _draw_block(spec, rng):
    n, p = spec.n, spec.total_p
    width = len(spec.blocks) + 2 * p
    draws = rng.standard_normal((n, width))
    values = np.empty((n, p))
    col = 0
    pos = 0
    for b in spec.blocks:
        z = draws[:, col]
        eps = draws[:, col + 1: col + 1 + b.size]
        values[:, pos: pos + b.size] = math.sqrt(b.rho) * z[:, None] + math.sqrt(1.0 - b.rho) * eps
        col += 1 + b.size
        pos += b.size
    values += spec.noise_sd * draws[:, col: col + p]
    return values


def gen_block(spec):
    """Draw from the block model. Returns ``(DataMatrix, block labels)``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    values = _draw_block(spec, rng)
    return DataMatrix(values, tuple(_block_names(spec))), _block_labels(spec)


def gen_global_factor(spec):
    spec.validate()
    block = spec.block
    rng = np.random.default_rng(block.seed)
    values = _draw_block(block, rng)
    z = rng.standard_normal(block.n)
    values = values + spec.global_loading * z[:, None]
    return DataMatrix(values, tuple(_block_names(block))), _block_labels(block)


def block_covariance(spec):
    """Population covariance of ``gen_block`` / ``gen_global_factor`` draws."""
    if isinstance(spec, GlobalFactorSpec):
        g2 = spec.global_loading ** 2
        spec = spec.block
    else:
        g2 = 0.0
    p = spec.total_p
    cov = np.full((p, p), g2)
    pos = 0
    for b in spec.blocks:
        cov[pos: pos + b.size, pos: pos + b.size] += b.rho
        pos += b.size
    cov[np.diag_indices(p)] = 1.0 + spec.noise_sd ** 2 + g2
    return cov


def gen_driver_modulator(spec):
    """Raw-scale driver/modulator data.

    Columns are grouped per driver: the driver itself, then its modulators.
    Per sample and driver, the log driver value is drawn first, then the log
    factor of each modulator. Returns ``(DataMatrix, driver index per column)``.
    """
    spec.validate()
    d, m = spec.drivers, spec.modulators_per_driver
    rng = np.random.default_rng(spec.seed)
    draws = rng.standard_normal((spec.n, d, m + 1))
    log_driver = spec.log_driver_sd * draws[:, :, :1]
    log_values = np.concatenate(
        [log_driver, log_driver + spec.log_factor_sd * draws[:, :, 1:]], axis=2
    ).reshape(spec.n, d * (m + 1))
    names = [f"d{k}" if j == 0 else f"d{k}_m{j}" for k in range(d) for j in range(m + 1)]
    labels = [k for k in range(d) for _ in range(m + 1)]
    return DataMatrix(np.exp(log_values), tuple(names), RAW), labels


def log_transform(X):
    """Natural log of a raw-scale matrix; every entry must be positive."""
    bad = np.argwhere(X.values <= 0)
    if len(bad):
        r, c = bad[0]
        raise NonPositiveEntry(int(r), int(c), float(X.values[r, c]))
    return DataMatrix(np.log(X.values), X.var_names, LOG)


def spec_from_json(obj):
    """Build a generator spec from its JSON form; ``model`` picks the generator."""
    if not isinstance(obj, dict):
        raise InvalidSpec("model", "spec must be a JSON object")
    model = obj.get("model", "block")
    try:
        if model in ("block", "global_factor"):
            raw_blocks = obj["blocks"]
            if not isinstance(raw_blocks, list):
                raise InvalidSpec("blocks", "must be a list")
            blocks = []
            for k, b in enumerate(raw_blocks):
                if not isinstance(b, dict) or "size" not in b or "rho" not in b:
                    raise InvalidSpec(f"blocks[{k}]", "needs 'size' and 'rho'")
                blocks.append(Block(b["size"], b["rho"]))
            spec = BlockModelSpec(obj["seed"], obj["n"], tuple(blocks), obj.get("noise_sd", 0.0), obj.get("p"))
            if model == "global_factor":
                spec = GlobalFactorSpec(spec, obj.get("global_loading", 0.0))
        elif model == "driver_modulator":
            spec = DriverModulatorSpec(
                obj["seed"], obj["n"], obj["drivers"], obj["modulators_per_driver"],
                obj.get("log_driver_sd", 1.0), obj.get("log_factor_sd", 1.0),
            )
        else:
            raise InvalidSpec("model", f"unknown model {model!r}")
    except KeyError as exc:
        raise InvalidSpec(exc.args[0], "missing required field") from None
    spec.validate()
    return spec


def generate(spec):
    if isinstance(spec, GlobalFactorSpec):
        return gen_global_factor(spec)
    if isinstance(spec, DriverModulatorSpec):
        return gen_driver_modulator(spec)
    return gen_block(spec)
