"""Monte Carlo simulation of i.i.d. random codes with the channel-independent
decoder and the one-bit-feedback input adaptation loop.

The decoder never reads the channel matrix: decisions are a pure function of
(codebook, received word, Q, delta).  Codebooks are regenerated fresh every
block from the current Q.  When the codebook size ceil(e^{nR}) fits
``codebook_cap`` the codebook is materialized and decoded literally; beyond
the cap the block outcome is sampled from its exact distribution instead,
using the competitor conditional-type class tables (the codewords other than
the transmitted one are i.i.d. and independent of the received word, so only
the top metric order statistics matter).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .itcore import (
    Channel,
    Distribution,
    ResourceLimitError,
    TIE_TOL,
    TypeWithDenominator,
    codebook_size,
    empirical_joint_type,
)
from .exponents import (
    StrictDomainReport,
    correct_exponent_ml,
    correct_exponent_strict,
    error_exponent,
)
from .oracle import CompetitorClassTable, competitor_class_table, decode_metric


class Scheme(Enum):
    MARGIN = "margin"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class SimConfig:
    n: int
    rate: float
    delta: float
    blocks: int
    q0: Distribution
    channel_schedule: tuple
    seed: int
    scheme: Scheme = Scheme.MARGIN
    codebook_cap: int = 2**20
    use_ml_decoder: bool = False

    def __post_init__(self):
        if self.n < 1 or self.blocks < 0 or self.delta < 0:
            raise ValueError("invalid simulation parameters")
        sched = tuple(self.channel_schedule)
        if not sched or sched[0][0] != 0:
            raise ValueError("channel schedule must start at block 0")
        idx = [i for i, _ in sched]
        if any(b >= a for a, b in zip(idx[1:], idx[:-1])):
            raise ValueError("channel schedule indices must be strictly increasing")
        if self.use_ml_decoder and self.scheme is not Scheme.THRESHOLD:
            raise ValueError("the ML-metric decoder is only available with the threshold scheme")
        object.__setattr__(self, "channel_schedule", sched)


@dataclass(frozen=True)
class BlockOutcome:
    decoded: int | None
    correct: bool
    feedback: int
    winner_metric: float
    runner_up_metric: float
    joint_type: TypeWithDenominator
    q_next: Distribution


@dataclass(frozen=True)
class UpdateStat:
    block: int
    desync: bool
    l1_to_minimizer: float
    guard_holds: bool
    error_exp_at_rate: float
    correct_exp_at_rate_plus_delta: float


@dataclass(frozen=True)
class RunSummary:
    blocks: int
    feedback_rate: float
    error_rate: float
    updates: int
    desync_blocks: tuple
    update_stats: tuple
    q_final: Distribution


@dataclass(frozen=True)
class SimResult:
    trace: tuple
    summary: RunSummary


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent, reproducible stream for one trial of a multi-trial study."""
    return np.random.default_rng([seed, trial])


def build_codebook(
    q: Distribution, n: int, rate: float, rng: np.random.Generator, codebook_cap: int = 2**20
) -> np.ndarray:
    """M x n symbol array, entries i.i.d. ~ q, M = ceil(e^{n*rate})."""
    m = codebook_size(n, rate)
    if m > codebook_cap:
        raise ResourceLimitError(f"codebook size {m} exceeds cap {codebook_cap}")
    cdf = np.cumsum(q.probs)
    u = rng.random((m, n))
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def _transmit(x: np.ndarray, p: Channel, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(p.matrix, axis=1)
    u = rng.random(x.size)
    return (u[:, None] > cdf[x]).sum(axis=1).astype(np.int64)


def _codeword_metrics(codebook: np.ndarray, y: np.ndarray, q: Distribution, ny: int) -> np.ndarray:
    """Decode metric D(ToV_m || TxQ) for every codeword, vectorized."""
    m, n = codebook.shape
    nx = len(q)
    cells = ny * nx
    flat = np.bincount(
        (np.arange(m)[:, None] * cells + y[None, :] * nx + codebook).ravel(),
        minlength=m * cells,
    ).reshape(m, ny, nx)
    r = np.bincount(y, minlength=ny).astype(float)
    rlogr = float(np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0).sum())

    c = flat.astype(float)
    pos = c > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        clogc = np.where(pos, c * np.log(np.where(pos, c, 1.0)), 0.0).sum(axis=(1, 2))
    logq = np.where(q.probs > 0, np.log(np.where(q.probs > 0, q.probs, 1.0)), 0.0)
    vals = (clogc - rlogr - (c * logq[None, None, :]).sum(axis=(1, 2))) / n
    outside = (pos & (q.probs[None, None, :] == 0)).any(axis=(1, 2))
    vals[outside] = math.inf
    return vals


def _ml_metrics(codebook: np.ndarray, y: np.ndarray, p: Channel) -> np.ndarray:
    logp = np.where(p.matrix > 0, np.log(np.where(p.matrix > 0, p.matrix, 1.0)), -np.inf)
    with np.errstate(invalid="ignore"):
        vals = logp[codebook, y[None, :]].sum(axis=1) / codebook.shape[1]
    return vals


@dataclass(frozen=True)
class DecodeOutcome:
    decoded: int | None
    winner_metric: float
    runner_up_metric: float
    feedback: int


def natural_decode(codebook: np.ndarray, y: np.ndarray, q: Distribution, delta: float) -> DecodeOutcome:
    """Unique-argmax decoding of the metric average, with margin feedback.

    Ties (within TIE_TOL) are erasures with feedback 0.  A single-codeword
    codebook wins vacuously with feedback 1 (unless delta is the +inf
    sentinel, which always forces feedback 0).
    """
    ny = int(y.max()) + 1
    metrics = _codeword_metrics(codebook, y, q, ny)
    return _pick_winner(metrics, delta)


def _pick_winner(metrics: np.ndarray, delta: float) -> DecodeOutcome:
    if metrics.size == 1:
        fb = 0 if delta == math.inf else 1
        return DecodeOutcome(0, float(metrics[0]), -math.inf, fb)
    top2 = np.argpartition(-metrics, 1)[:2]
    if metrics[top2[0]] < metrics[top2[1]]:
        top2 = top2[::-1]
    best, second = float(metrics[top2[0]]), float(metrics[top2[1]])
    win = best > second + TIE_TOL
    decoded = int(top2[0]) if win else None
    if delta == math.inf:
        fb = 0
    else:
        fb = int(win and best - second > delta + TIE_TOL)
    return DecodeOutcome(decoded, best, second, fb)


def threshold_decide(winner_metric: float, rate: float, delta: float) -> int:
    """Feedback bit of the alternative scheme: 1 iff the winner's metric
    average strictly exceeds rate + delta."""
    return int(winner_metric > rate + delta)


# ---------------------------------------------------------------------------
# single-block execution (literal and sampled paths)
# ---------------------------------------------------------------------------


def _draw_iid(probs: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    return np.searchsorted(np.cumsum(probs), rng.random(size), side="right").astype(np.int64)


def _sample_max_class(
    table: CompetitorClassTable, competitors, rng: np.random.Generator, start: int = 0
) -> int | None:
    """Index of the highest-metric class hit by ``competitors`` i.i.d. codewords
    conditioned to lie in classes >= start; None when competitors == 0."""
    if competitors <= 0:
        return None
    logs = table.suffix_logsum
    flog = float(competitors) * (logs[start:] - logs[start])  # non-increasing
    logu = math.log(rng.random())
    cnt = int(np.searchsorted(-flog, -logu, side="right"))
    return start + cnt - 1


def _top_class_is_tied(
    table: CompetitorClassTable, competitors, j: int, rng: np.random.Generator
) -> bool:
    """Given the max class is j, whether two or more competitors share it."""
    if competitors <= 1:
        return False
    alpha = math.exp(table.log_probs[j] - table.suffix_logsum[j])
    alpha = min(max(alpha, 0.0), 1.0)
    if alpha >= 1.0:
        return True
    mfl = float(competitors)
    log_one = math.log(mfl) + math.log(alpha) + (mfl - 1.0) * math.log1p(-alpha)
    p_ge1 = -math.expm1(mfl * math.log1p(-alpha))
    p_single = math.exp(log_one) / p_ge1 if p_ge1 > 0 else 0.0
    return rng.random() > p_single


def _virtual_block(
    q: Distribution,
    p: Channel,
    n: int,
    rate: float,
    delta: float,
    m: int,
    rng: np.random.Generator,
    scheme: Scheme,
    use_ml_decoder: bool,
    table_cache: dict,
):
    """Sample one block outcome without materializing the codebook.

    Equal in distribution to the literal fresh-codebook block: competitor
    conditional-type classes given the received word are enumerated exactly
    and the top metric order statistics are drawn by inverse CDF.
    """
    nx, ny = p.num_inputs, p.num_outputs
    x = _draw_iid(q.probs, n, rng)
    y = _transmit(x, p, rng)
    jt = empirical_joint_type(x, y, nx, ny)
    r = tuple(int(v) for v in jt.counts.sum(axis=1))
    b0 = decode_metric(jt.counts, n, q)

    key = (r, use_ml_decoder)
    table = table_cache.get(key)
    if table is None:
        table = competitor_class_table(
            np.asarray(r), q, n, metric_channel=p if use_ml_decoder else None
        )
        table_cache[key] = table
    competitors = m - 1

    if use_ml_decoder:
        # Classes are ordered by the ML metric; the sent word competes with its
        # own ML metric, but feedback always uses the natural metric.
        with np.errstate(invalid="ignore"):
            cells = np.where(jt.counts > 0, jt.counts * _logp_cells(p), 0.0)
        b0_decode = float(cells.sum() / n)
    else:
        b0_decode = b0

    jstar = _sample_max_class(table, competitors, rng)
    sent_index = int(rng.integers(0, min(m, 2**62)))

    if jstar is None:
        decoded, correct = sent_index, True
        winner_metric, runner_up = b0, -math.inf
        fb_margin = 0 if delta == math.inf else 1
        winner_counts = jt.counts
    else:
        bmax = float(table.metrics[jstar])
        if b0_decode > bmax + TIE_TOL:
            decoded, correct = sent_index, True
            winner_counts = jt.counts
            if use_ml_decoder:
                winner_metric, runner_up = b0, bmax  # runner-up in the decode (ML) domain
                fb_margin = 0
            else:
                winner_metric, runner_up = b0, bmax
                fb_margin = int(delta != math.inf and b0 - bmax > delta + TIE_TOL)
        elif bmax > b0_decode + TIE_TOL:
            if _top_class_is_tied(table, competitors, jstar, rng):
                return _erasure_outcome(jt, q, b0), None
            jsecond = _sample_max_class(table, competitors - 1, rng, start=jstar + 1)
            second_best = table.metrics[jsecond] if jsecond is not None else -math.inf
            runner_decode = max(b0_decode, float(second_best))
            if not (bmax > runner_decode + TIE_TOL):
                return _erasure_outcome(jt, q, b0), None
            decoded = (sent_index + 1) % max(m, 2)
            correct = False
            winner_counts = table.counts[jstar]
            if use_ml_decoder:
                winner_metric = float(decode_metric(winner_counts, n, q))
                runner_up = runner_decode
                fb_margin = 0
            else:
                winner_metric, runner_up = bmax, runner_decode
                fb_margin = int(delta != math.inf and bmax - runner_decode > delta + TIE_TOL)
        else:
            return _erasure_outcome(jt, q, b0), None

    if scheme is Scheme.THRESHOLD:
        feedback = threshold_decide(winner_metric, rate, delta)
    else:
        feedback = fb_margin
    return (
        BlockOutcome(
            decoded=decoded,
            correct=correct,
            feedback=feedback,
            winner_metric=winner_metric,
            runner_up_metric=runner_up,
            joint_type=jt,
            q_next=q,  # replaced by the caller on feedback = 1
        ),
        winner_counts,
    )


def _logp_cells(p: Channel) -> np.ndarray:
    return np.where(p.matrix > 0, np.log(np.where(p.matrix > 0, p.matrix, 1.0)), -np.inf).T


def _erasure_outcome(jt: TypeWithDenominator, q: Distribution, b0: float):
    return BlockOutcome(
        decoded=None,
        correct=False,
        feedback=0,
        winner_metric=b0,
        runner_up_metric=b0,
        joint_type=jt,
        q_next=q,
    )


def _literal_block(
    q: Distribution,
    p: Channel,
    n: int,
    rate: float,
    delta: float,
    rng: np.random.Generator,
    scheme: Scheme,
    use_ml_decoder: bool,
    codebook_cap: int,
):
    nx, ny = p.num_inputs, p.num_outputs
    codebook = build_codebook(q, n, rate, rng, codebook_cap)
    m = codebook.shape[0]
    sent = int(rng.integers(0, m))
    y = _transmit(codebook[sent], p, rng)
    jt = empirical_joint_type(codebook[sent], y, nx, ny)

    if use_ml_decoder:
        dec_metrics = _ml_metrics(codebook, y, p)
        dec = _pick_winner(dec_metrics, delta)
        nat = _codeword_metrics(codebook, y, q, ny)
        winner_metric = float(nat[dec.decoded]) if dec.decoded is not None else float(nat.max())
        runner_up = dec.runner_up_metric
        fb_margin = 0
    else:
        nat = _codeword_metrics(codebook, y, q, ny)
        dec = _pick_winner(nat, delta)
        winner_metric = dec.winner_metric
        runner_up = dec.runner_up_metric
        fb_margin = dec.feedback

    if scheme is Scheme.THRESHOLD:
        feedback = threshold_decide(winner_metric, rate, delta) if dec.decoded is not None else 0
    else:
        feedback = fb_margin
    winner_counts = None
    if dec.decoded is not None:
        winner_counts = empirical_joint_type(codebook[dec.decoded], y, nx, ny).counts
    return (
        BlockOutcome(
            decoded=dec.decoded,
            correct=dec.decoded == sent,
            feedback=feedback,
            winner_metric=winner_metric,
            runner_up_metric=runner_up,
            joint_type=jt,
            q_next=q,
        ),
        winner_counts,
    )


def _channel_at(schedule: tuple, block: int) -> Channel:
    current = schedule[0][1]
    for idx, ch in schedule:
        if idx <= block:
            current = ch
        else:
            break
    return current


def nts_run(config: SimConfig) -> SimResult:
    """Run the adaptation loop: every block draws a fresh codebook from the
    current Q, transmits a uniform message, decodes, and on feedback 1
    replaces Q by the input marginal of the winning codeword's joint type
    (decoder side; blocks where the winner differs from the sent message are
    reported as desynchronized updates, not corrected)."""
    rng = np.random.default_rng(config.seed)
    q = config.q0
    m = codebook_size(config.n, config.rate)
    trace = []
    update_stats = []
    desync = []
    errors = 0
    feedbacks = 0
    table_cache: dict = {}
    stat_cache: dict = {}
    cache_q = q

    for block in range(config.blocks):
        p = _channel_at(config.channel_schedule, block)
        if q is not cache_q:
            table_cache.clear()
            cache_q = q
        if m <= config.codebook_cap:
            outcome, winner_counts = _literal_block(
                q, p, config.n, config.rate, config.delta, rng,
                config.scheme, config.use_ml_decoder, config.codebook_cap,
            )
        else:
            outcome, winner_counts = _virtual_block(
                q, p, config.n, config.rate, config.delta, m, rng,
                config.scheme, config.use_ml_decoder, table_cache,
            )

        if not outcome.correct:
            errors += 1
        if outcome.feedback == 1 and winner_counts is not None:
            feedbacks += 1
            q_next = Distribution(winner_counts.sum(axis=0) / config.n)
            update_stats.append(
                _update_stat(block, outcome, winner_counts, q, p, config, stat_cache)
            )
            if not outcome.correct:
                desync.append(block)
            outcome = BlockOutcome(
                decoded=outcome.decoded,
                correct=outcome.correct,
                feedback=1,
                winner_metric=outcome.winner_metric,
                runner_up_metric=outcome.runner_up_metric,
                joint_type=outcome.joint_type,
                q_next=q_next,
            )
            q = q_next
        trace.append(outcome)

    blocks = max(config.blocks, 1)
    summary = RunSummary(
        blocks=config.blocks,
        feedback_rate=feedbacks / blocks,
        error_rate=errors / blocks,
        updates=len(update_stats),
        desync_blocks=tuple(desync),
        update_stats=tuple(update_stats),
        q_final=q,
    )
    return SimResult(trace=tuple(trace), summary=summary)


def _update_stat(
    block: int,
    outcome: BlockOutcome,
    winner_counts: np.ndarray,
    q: Distribution,
    p: Channel,
    config: SimConfig,
    cache: dict,
) -> UpdateStat:
    # Updated distributions are type marginals (multiples of 1/n), so the
    # per-Q analytics repeat; key the cache on the exact probabilities.
    key = (q.probs.tobytes(), id(p))
    hit = cache.get(key)
    if hit is None:
        rate_plus = config.rate + config.delta
        ee = error_exponent(config.rate, q, p).value
        strict = correct_exponent_strict(rate_plus, q, p)
        if isinstance(strict, StrictDomainReport):
            res = correct_exponent_ml(rate_plus, q, p)
        else:
            res = strict
        hit = (ee, res.value, res.minimizer.mass)
        cache[key] = hit
    ee, ec_value, minimizer_mass = hit
    observed = winner_counts / config.n
    l1 = float(np.abs(observed - minimizer_mass).sum())
    return UpdateStat(
        block=block,
        desync=not outcome.correct,
        l1_to_minimizer=l1,
        guard_holds=ee > ec_value,
        error_exp_at_rate=ee,
        correct_exp_at_rate_plus_delta=ec_value,
    )


def fixed_q_outcomes(
    q: Distribution,
    p: Channel,
    n: int,
    rate: float,
    delta: float,
    blocks: int,
    seed: int,
    scheme: Scheme = Scheme.MARGIN,
    codebook_cap: int = 2**20,
) -> tuple:
    """Independent single-block outcomes at a frozen codebook distribution.

    Same per-block law as nts_run but Q is never updated; used for event
    statistics and conditioned type studies at fixed Q."""
    rng = np.random.default_rng(seed)
    m = codebook_size(n, rate)
    table_cache: dict = {}
    outcomes = []
    for _ in range(blocks):
        if m <= codebook_cap:
            out, _ = _literal_block(q, p, n, rate, delta, rng, scheme, False, codebook_cap)
        else:
            out, _ = _virtual_block(q, p, n, rate, delta, m, rng, scheme, False, table_cache)
        outcomes.append(out)
    return tuple(outcomes)


def fixed_q_event_counts(
    q: Distribution,
    p: Channel,
    n: int,
    rate: float,
    delta: float,
    trials: int,
    seed: int,
) -> dict:
    """Vectorized single-block trials at fixed Q (no adaptation): counts of
    {error, correct-strict, sent-wins-with-margin} over ``trials`` blocks.

    Used to validate the exact finite-n analyzer by Monte Carlo."""
    m = codebook_size(n, rate)
    if m * trials * n > 400_000_000:
        raise ResourceLimitError("trial batch too large")
    rng = np.random.default_rng(seed)
    nx, ny = p.num_inputs, p.num_outputs
    cells = ny * nx

    books = _draw_iid(q.probs, trials * m * n, rng).reshape(trials, m, n)
    sent = books[:, 0, :]  # message index is immaterial by symmetry
    u = rng.random((trials, n))
    cdf = np.cumsum(p.matrix, axis=1)
    y = (u[:, :, None] > cdf[sent]).sum(axis=2)

    # metrics per (trial, codeword)
    base = y[:, None, :] * nx + books  # (trials, m, n)
    offs = (np.arange(trials)[:, None, None] * m + np.arange(m)[None, :, None]) * cells
    flat = np.bincount((base + offs).ravel(), minlength=trials * m * cells)
    c = flat.reshape(trials, m, ny, nx).astype(float)
    r = c[:, 0].sum(axis=2)  # (trials, ny), same for all codewords
    rlogr = np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0).sum(axis=1)
    pos = c > 0
    clogc = np.where(pos, c * np.log(np.where(pos, c, 1.0)), 0.0).sum(axis=(2, 3))
    logq = np.where(q.probs > 0, np.log(np.where(q.probs > 0, q.probs, 1.0)), 0.0)
    mets = (clogc - rlogr[:, None] - (c * logq[None, None, None, :]).sum(axis=(2, 3))) / n

    b0 = mets[:, 0]
    comp = mets[:, 1:] if m > 1 else np.full((trials, 1), -math.inf)
    cmax = comp.max(axis=1)
    correct = b0 > cmax + TIE_TOL
    if delta == math.inf:
        margin = np.zeros(trials, dtype=bool)
    else:
        margin = b0 - cmax > delta + TIE_TOL
    return {
        "trials": trials,
        "error": int((~correct).sum()),
        "correct_strict": int(correct.sum()),
        "feedback1": int(margin.sum()),
    }


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    stderr: float
    n_points: int
    censored: tuple


def estimate_exponent(samples) -> ExponentFit:
    """Least-squares slope of -log(frequency) against n, with standard error.

    Zero frequencies are censored points: excluded with a warning."""
    samples = list(samples)
    ns = [s[0] for s in samples]
    if len(set(ns)) < 3:
        raise ValueError("need at least 3 distinct blocklengths")
    censored = tuple(n for n, f in samples if f == 0)
    if censored:
        warnings.warn(f"zero frequencies at n={censored} censored from the fit")
    for n, f in samples:
        if f < 0 or f > 1:
            raise ValueError(f"frequency {f} outside [0, 1] at n={n}")
    pts = [(n, f) for n, f in samples if f > 0]
    if len({n for n, _ in pts}) < 2:
        raise ValueError("fewer than 2 distinct blocklengths left after censoring")
    x = np.array([n for n, _ in pts], dtype=float)
    z = -np.log(np.array([f for _, f in pts], dtype=float))
    k = x.size
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (z - z.mean())) / sxx
    resid = z - z.mean() - slope * xc
    dof = k - 2
    stderr = math.sqrt(max(float(resid @ resid), 0.0) / dof / sxx) if dof > 0 else math.inf
    return ExponentFit(slope=slope, stderr=stderr, n_points=k, censored=censored)
