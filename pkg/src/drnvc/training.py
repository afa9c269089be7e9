"""Joint multi-route rate-distortion optimization.

Every training step runs all K routes on the batch and minimizes
sum_i (R_i + lambda_i * D_i), with R_i in bits per pixel under noise-mode
quantization and D_i the mean squared reconstruction error. The
joint-routes phase then walks routes from K-2 down to 0, decaying the
lambda prefix by kappa and fine-tuning until each route's validation point
reaches its diverging point on the joint RD curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, NumericError, ShapeError
from .model import DraModel
from .optim import Adam
from .rng import RngHub

LAMBDA_MAX_DEFAULT = 300.0
KAPPA_DEFAULT = 0.7
INNER_CAP_DEFAULT = 8
POST_ROUNDS_DEFAULT = 3


@dataclass(frozen=True)
class LambdaSchedule:
    """Per-route distortion weights plus the decay coefficient."""

    lambdas: tuple[float, ...]
    kappa: float = KAPPA_DEFAULT

    def __post_init__(self):
        if any(l <= 0 for l in self.lambdas):
            raise ShapeError(f"lambdas must be positive, got {self.lambdas}")
        if any(b < a for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ShapeError(f"lambdas must be non-decreasing, got {self.lambdas}")
        if not 0.0 < self.kappa < 1.0:
            raise ShapeError(f"kappa must be in (0,1), got {self.kappa}")

    @classmethod
    def flat(cls, num_routes: int, lam_max: float = LAMBDA_MAX_DEFAULT,
             kappa: float = KAPPA_DEFAULT) -> "LambdaSchedule":
        return cls(lambdas=(float(lam_max),) * num_routes, kappa=kappa)


def decay_lambdas(schedule: LambdaSchedule, k: int, kappa: float | None = None) -> LambdaSchedule:
    """Scale lambda_0..lambda_k (inclusive) by kappa; higher routes untouched."""
    K = len(schedule.lambdas)
    if not 0 <= k <= K - 2:
        raise ShapeError(f"decay index {k} out of range 0..{K - 2}")
    kap = schedule.kappa if kappa is None else kappa
    new = tuple(l * kap if i <= k else l for i, l in enumerate(schedule.lambdas))
    return replace(schedule, lambdas=new)


@dataclass
class RDPoint:
    rate: float        # mean bpp on validation
    distortion: float  # mean squared error, pixels in [0,1]
    route: int

    @property
    def psnr(self) -> float:
        return float("inf") if self.distortion == 0.0 else float(10.0 * np.log10(1.0 / self.distortion))


def slope(p_low: RDPoint, p_high: RDPoint) -> float:
    """Chord slope (D_low - D_high) / (R_low - R_high); symmetric in its
    arguments, negative for properly ordered RD points."""
    if p_low.rate == p_high.rate:
        raise DataError(f"degenerate chord: both points at rate {p_low.rate}")
    return (p_low.distortion - p_high.distortion) / (p_low.rate - p_high.rate)


def rd_loss(model: DraModel, x_t: np.ndarray, x_ref: np.ndarray,
            schedule: LambdaSchedule, noise_rng: np.random.Generator | None = None,
            with_grad: bool = False, batch_id: str = ""):
    """Joint loss over all routes. Returns (loss, [(R_i, D_i)] per route).

    with_grad accumulates parameter gradients of the full objective.
    """
    K = model.spec.num_routes
    if len(schedule.lambdas) != K:
        raise ShapeError(f"schedule has {len(schedule.lambdas)} lambdas for {K} routes")
    pixels = x_t.shape[0] * x_t.shape[2] * x_t.shape[3]
    loss = 0.0
    points = []
    for k in range(K):
        tape = model.route_pass(x_t, x_ref, k, mode="noise", noise_rng=noise_rng)
        r = tape.total_bits / pixels
        d = tape.mse
        lam = schedule.lambdas[k]
        term = r + lam * d
        if not np.isfinite(term):
            raise NumericError(f"non-finite RD loss on route {k}, batch {batch_id!r}")
        loss += term
        points.append((r, d))
        if with_grad:
            model.route_backward(tape, d_bits=1.0 / pixels, d_mse=lam)
    return loss, points


@dataclass
class TrainConfig:
    """Knobs of a training run; every produced artifact records the seed."""

    seed: int = 0
    iterations: int = 150          # N, per phase
    batch_size: int = 4
    lr: float = 1e-4
    lambda_max: float = LAMBDA_MAX_DEFAULT
    kappa: float = KAPPA_DEFAULT
    inner_cap: int = INNER_CAP_DEFAULT
    post_rounds: int = POST_ROUNDS_DEFAULT
    jro_iterations: int = 0        # fine-tune N per inner step; 0 -> iterations
    i_frame_fraction: float = 0.25
    literal_divergence: bool = False
    checkpoint_every: int = 0      # 0 disables cadence snapshots

    def __post_init__(self):
        if self.iterations < 1:
            raise ShapeError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ShapeError("batch_size must be >= 1")

    @property
    def fine_tune_iters(self) -> int:
        return self.jro_iterations or self.iterations


class PairSampler:
    """Draws (x_t, x_ref) batches from consecutive-frame pairs.

    A seeded fraction of samples swaps the reference for the constant
    mid-gray frame so intra coding is trained too.
    """

    def __init__(self, pairs: list[tuple[np.ndarray, np.ndarray]],
                 i_frame_fraction: float = 0.25):
        if not pairs:
            raise DataError("training dataset is empty")
        self.x_t = np.stack([p[0] for p in pairs])[:, None]
        self.x_ref = np.stack([p[1] for p in pairs])[:, None]
        self.i_frame_fraction = i_frame_fraction

    def __len__(self):
        return self.x_t.shape[0]

    def batch(self, rng: np.random.Generator, size: int):
        idx = rng.integers(0, len(self), size=size)
        xt = self.x_t[idx]
        xr = self.x_ref[idx].copy()
        intra = rng.random(size) < self.i_frame_fraction
        xr[intra] = 0.5
        return xt, xr


def _train_iterations(model, opt, sampler, schedule, cfg, hub, n_iters,
                      loss_log: list | None = None, phase: str = "train"):
    batch_rng = hub.stream("train/batch")
    noise_rng = hub.stream("train/noise")
    for j in range(n_iters):
        xt, xr = sampler.batch(batch_rng, cfg.batch_size)
        opt.zero_grad()
        loss, _ = rd_loss(model, xt, xr, schedule, noise_rng,
                          with_grad=True, batch_id=f"{phase}/{j}")
        opt.step()
        if loss_log is not None:
            loss_log.append(loss)


def train_initial(model: DraModel, sampler: PairSampler, cfg: TrainConfig,
                  hub: RngHub, schedule: LambdaSchedule | None = None,
                  loss_log: list | None = None,
                  checkpoint_cb=None) -> LambdaSchedule:
    """Initial strategy: K passes of N iterations, each step minimizing the
    summed loss of Eq. (7) over all routes. Returns the schedule used."""
    K = model.spec.num_routes
    if schedule is None:
        schedule = LambdaSchedule.flat(K, cfg.lambda_max, cfg.kappa)
    opt = Adam(model.parameters(), lr=cfg.lr)
    for k in range(K):
        _train_iterations(model, opt, sampler, schedule, cfg, hub,
                          cfg.iterations, loss_log, phase=f"initial/route{k}")
        if checkpoint_cb is not None:
            checkpoint_cb(f"initial_phase{k}")
    return schedule


def evaluate_routes(model: DraModel, val_pairs: list[tuple[np.ndarray, np.ndarray]]) -> list[RDPoint]:
    """Round-mode mean bpp and MSE per route on the validation pairs.
    Deterministic: no sampling, no noise."""
    if not val_pairs:
        raise DataError("validation set is empty")
    xt = np.stack([p[0] for p in val_pairs])[:, None]
    xr = np.stack([p[1] for p in val_pairs])[:, None]
    pixels = xt.shape[0] * xt.shape[2] * xt.shape[3]
    points = []
    for k in range(model.spec.num_routes):
        tape = model.route_pass(xt, xr, k, mode="round")
        points.append(RDPoint(rate=tape.total_bits / pixels, distortion=tape.mse, route=k))
    return points


@dataclass
class TrajectoryRow:
    phase: str
    k: int
    inner_iter: int
    lambdas: tuple[float, ...]
    points: list[RDPoint]
    xi: float
    note: str = ""


@dataclass
class JroResult:
    schedule: LambdaSchedule
    trajectory: list[TrajectoryRow] = field(default_factory=list)


def jro(model: DraModel, sampler: PairSampler, val_pairs, cfg: TrainConfig,
        hub: RngHub, schedule: LambdaSchedule | None = None,
        loss_log: list | None = None) -> JroResult:
    """Joint-routes optimization over a pre-trained model.

    For k = K-2 down to 0: repeatedly decay lambda_0..lambda_k by kappa and
    fine-tune, evaluating the chord slope xi between routes k and k+1 on
    validation. The inner loop stops at the diverging point: |xi| failed to
    keep declining while validation R_k kept moving left. A capped loop exits
    with a warning row instead of spinning.
    """
    K = model.spec.num_routes
    if schedule is None:
        schedule = LambdaSchedule.flat(K, cfg.lambda_max, cfg.kappa)
    opt = Adam(model.parameters(), lr=cfg.lr)
    result = JroResult(schedule=schedule)

    points = evaluate_routes(model, val_pairs)
    result.trajectory.append(TrajectoryRow(
        phase="pretrained", k=-1, inner_iter=0, lambdas=schedule.lambdas,
        points=points, xi=slope(points[K - 2], points[K - 1])))

    for k in range(K - 2, -1, -1):
        xi_prev = 0.0 if cfg.literal_divergence else None
        r_prev = 0.0 if cfg.literal_divergence else None
        stopped = False
        for it in range(1, cfg.inner_cap + 1):
            schedule = decay_lambdas(schedule, k)
            _train_iterations(model, opt, sampler, schedule, cfg, hub,
                              cfg.fine_tune_iters, loss_log, phase=f"jro/route{k}/{it}")
            points = evaluate_routes(model, val_pairs)
            xi = slope(points[k], points[k + 1])
            r_k = points[k].rate
            result.trajectory.append(TrajectoryRow(
                phase=f"route{k}", k=k, inner_iter=it,
                lambdas=schedule.lambdas, points=points, xi=xi))
            if cfg.literal_divergence:
                if xi < xi_prev and r_k < r_prev:
                    stopped = True
            elif xi_prev is not None and abs(xi) >= abs(xi_prev) and r_k < r_prev:
                stopped = True
            if stopped:
                break
            xi_prev, r_prev = xi, r_k
        if not stopped:
            result.trajectory.append(TrajectoryRow(
                phase=f"route{k}", k=k, inner_iter=cfg.inner_cap,
                lambdas=schedule.lambdas, points=points, xi=xi,
                note="inner-loop cap reached before diverging point"))

    schedule = post_train(model, sampler, val_pairs, cfg, hub, schedule, opt,
                          result.trajectory, loss_log)
    result.schedule = schedule
    return result


def post_train(model, sampler, val_pairs, cfg: TrainConfig, hub, schedule,
               opt=None, trajectory=None, loss_log=None) -> LambdaSchedule:
    """Post-training: decay lambda_0 alone for a fixed number of rounds."""
    if opt is None:
        opt = Adam(model.parameters(), lr=cfg.lr)
    for rnd in range(1, cfg.post_rounds + 1):
        schedule = decay_lambdas(schedule, 0)
        _train_iterations(model, opt, sampler, schedule, cfg, hub,
                          cfg.fine_tune_iters, loss_log, phase=f"post/{rnd}")
        if trajectory is not None:
            points = evaluate_routes(model, val_pairs)
            trajectory.append(TrajectoryRow(
                phase="post", k=0, inner_iter=rnd, lambdas=schedule.lambdas,
                points=points, xi=slope(points[0], points[1])))
    return schedule


def trajectory_csv_rows(trajectory: list[TrajectoryRow], num_routes: int):
    """Flatten trajectory rows for the CSV log."""
    header = (["phase", "k", "inner_iter"]
              + [f"lambda_{i}" for i in range(num_routes)]
              + [f"R_{i}" for i in range(num_routes)]
              + [f"D_{i}" for i in range(num_routes)]
              + ["xi", "note"])
    rows = [header]
    for row in trajectory:
        rows.append([row.phase, row.k, row.inner_iter]
                    + [repr(l) for l in row.lambdas]
                    + [repr(p.rate) for p in row.points]
                    + [repr(p.distortion) for p in row.points]
                    + [repr(row.xi), row.note])
    return rows
