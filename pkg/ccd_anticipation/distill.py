"""
Cross-modal distillation losses.

Teacher and student features are paired at tap positions (clip features, decoding features,
temporal hidden states, output hidden states). The contrastive loss is a bidirectional triplet
hinge with in-batch hard negatives, computed on cosine similarity after learnable per-tap
projections; the baselines are logit KL and feature L2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import torch
import torch.nn as nn
import torch.nn.functional as F

from ccd_anticipation.errors import AlignmentError, ConfigError, InputError, NumericError, \
    SimilarityError
from ccd_anticipation.vocab import PAD

logger = logging.getLogger(__name__)

MODES = ('ccd', 'logits_kl', 'feature_l2', 'none')
REDUCTIONS = ('sum', 'mean')


class TapKind(str, Enum):
    CLIP = 'clip'
    DEC = 'dec'
    TEMPORAL = 'temporal'
    OUTPUT = 'output'


ALL_TAPS = tuple(kind.value for kind in TapKind)


@dataclass
class DistillConfig:
    """
    `Args:`
        mode: str
            ``ccd``, ``logits_kl``, ``feature_l2`` or ``none``
        alpha: float
            Triplet margin
        weight: float
            w_ccd, weight of the distillation term in the total loss
        taps: tuple of str
            Active tap kinds
        common_dim: int
            d_c, width of the projected space; defaults to min(d_S, d_T). Optional fields carry
            their type in the field metadata for the config loader
        temperature: float
            KL temperature for ``logits_kl``
        reduction: str
            ``sum`` over pairs, or ``mean`` (sum divided by the number of pairs)
    """

    mode: str = 'ccd'
    alpha: float = 0.2
    weight: float = 10.0
    taps: tuple = ALL_TAPS
    common_dim: int = field(default=None, metadata={'type': int})
    temperature: float = 1.0
    reduction: str = 'sum'

    def __post_init__(self):
        self.taps = tuple(self.taps)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f'distill mode must be one of {MODES}, got {self.mode}')
        if self.alpha <= 0:
            raise ConfigError('alpha must be positive')
        if self.weight < 0:
            raise ConfigError('weight must be non-negative')
        unknown = set(self.taps) - set(ALL_TAPS)
        if unknown:
            raise ConfigError(f'Unknown taps {sorted(unknown)}; must be among {ALL_TAPS}')
        if self.mode != 'none' and not self.taps:
            raise ConfigError(f'distill mode {self.mode} needs at least one tap')
        if self.temperature <= 0:
            raise ConfigError('temperature must be positive')
        if self.reduction not in REDUCTIONS:
            raise ConfigError(f'reduction must be one of {REDUCTIONS}')
        if self.common_dim is not None and self.common_dim < 1:
            raise ConfigError('common_dim must be positive')
        return self

    @property
    def active(self):
        return self.mode != 'none'

    def with_taps(self, taps):
        """Config for a tap subset; an empty subset means no distillation."""
        taps = tuple(taps)
        return replace(self, taps=taps, mode=self.mode if taps else 'none')

    def to_dict(self):
        return {'mode': self.mode, 'alpha': self.alpha, 'weight': self.weight,
                'taps': list(self.taps), 'common_dim': self.common_dim,
                'temperature': self.temperature, 'reduction': self.reduction}


@dataclass
class TapGroup:
    """
    Aligned pairs of one tap kind and layer.

    `Args:`
        kind: str
        layer: int
        student: tensor (K, d_S)
        teacher: tensor (K, d_T)
        sample_index: long tensor (K,), batch row of each pair
        step_index: long tensor (K,), step position of each pair
    """

    kind: str
    layer: int
    student: torch.Tensor
    teacher: torch.Tensor
    sample_index: torch.Tensor
    step_index: torch.Tensor

    @property
    def key(self):
        return tap_key(self.kind, self.layer)

    @property
    def size(self):
        return self.student.shape[0]


@dataclass
class TapBatch:
    groups: list = field(default_factory=list)
    projector: 'TapProjector' = None

    @property
    def size(self):
        return sum(g.size for g in self.groups)


def tap_key(kind, layer):
    return f'{kind}_{layer}'


def tap_layers(kind, student_cfg, teacher_cfg):
    """Number of layers a tap kind pairs (per-layer kinds pair the shallower model's count)."""
    if kind == TapKind.TEMPORAL.value:
        return min(student_cfg.temporal_layers, teacher_cfg.temporal_layers)
    if kind == TapKind.OUTPUT.value:
        return min(student_cfg.output_layers, teacher_cfg.output_layers)
    return 1


class TapProjector(nn.Module):
    """
    Learnable projections P_S: d_S -> d_c and P_T: d_T -> d_c, one pair per tap kind and
    layer. With ``project_teacher=False`` only the student side is projected (to d_T), and
    only when the widths differ.

    `Args:`
        keys: list of str
            Tap keys (``kind_layer``)
        student_dim: int
        teacher_dim: int
        common_dim: int
        project_teacher: bool
    """

    def __init__(self, keys, student_dim, teacher_dim, common_dim=None, project_teacher=True):
        super().__init__()
        self.project_teacher = project_teacher
        self.student = nn.ModuleDict()
        self.teacher = nn.ModuleDict()

        if project_teacher:
            common_dim = common_dim or min(student_dim, teacher_dim)
            for key in keys:
                self.student[key] = nn.Linear(student_dim, common_dim, bias=False)
                self.teacher[key] = nn.Linear(teacher_dim, common_dim, bias=False)
        elif student_dim != teacher_dim:
            common_dim = teacher_dim
            for key in keys:
                self.student[key] = nn.Linear(student_dim, teacher_dim, bias=False)
        else:
            common_dim = student_dim

        self.common_dim = common_dim
        for linear in list(self.student.values()) + list(self.teacher.values()):
            bound = 1.0 / math.sqrt(linear.in_features)
            nn.init.uniform_(linear.weight, -bound, bound)

    @classmethod
    def for_models(cls, student_cfg, teacher_cfg, distill_cfg):
        """Projector covering every active tap of a distillation config."""
        keys = [tap_key(kind, layer) for kind in distill_cfg.taps
                for layer in range(tap_layers(kind, student_cfg, teacher_cfg))]
        return cls(keys, student_cfg.d, teacher_cfg.d, distill_cfg.common_dim,
                   project_teacher=distill_cfg.mode == 'ccd')

    def project(self, group):
        """`Returns:` (projected student (K, d_c), projected teacher (K, d_c))"""
        student = self.student[group.key](group.student) if group.key in self.student \
            else group.student
        teacher = self.teacher[group.key](group.teacher) if group.key in self.teacher \
            else group.teacher
        return student, teacher


def _unit(x, what):
    norms = x.norm(dim=-1, keepdim=True)
    if (norms == 0).any():
        raise SimilarityError(f'zero-norm projected {what} feature')
    return x / norms


def similarity(f_student, f_teacher, projections=None):
    """
    Cosine similarity of one student/teacher pair in the projected space.

    `Args:`
        f_student: tensor (d_S,)
        f_teacher: tensor (d_T,)
        projections: (P_S, P_T) pair of callables, or None for identity
    `Returns:`
        scalar tensor in [-1, 1]
    """

    if projections is not None:
        p_student, p_teacher = projections
        f_student, f_teacher = p_student(f_student), p_teacher(f_teacher)
    if f_student.shape != f_teacher.shape:
        raise InputError(f'projected widths differ: {tuple(f_student.shape)} vs '
                         f'{tuple(f_teacher.shape)}')
    return (_unit(f_student, 'student') * _unit(f_teacher, 'teacher')).sum(-1)


def _group_ccd(student, teacher, alpha):
    size = student.shape[0]
    if size < 2:
        # No negatives exist.
        return student.sum() * 0.0

    sim = _unit(student, 'student') @ _unit(teacher, 'teacher').T
    positive = sim.diagonal()
    eye = torch.eye(size, dtype=torch.bool, device=sim.device)
    masked = sim.masked_fill(eye, float('-inf'))
    # Row k: hardest teacher negative for student anchor k; column k: hardest student negative
    # for teacher anchor k.
    hard_teacher = masked.max(dim=1).values
    hard_student = masked.max(dim=0).values

    return (F.relu(alpha - positive + hard_teacher) + F.relu(alpha - positive + hard_student)).sum()


def ccd_loss(batch, alpha=0.2, reduction='sum'):
    """
    Cross-modal contrastive distillation loss over a `TapBatch`. Hard negatives come from the
    same tap kind and layer, excluding the anchor's own index.

    `Args:`
        batch: TapBatch
        alpha: float
            Margin
        reduction: str
            ``sum`` (as written) or ``mean`` over all pairs
    `Returns:`
        scalar tensor
    """

    if not batch.groups or batch.size == 0:
        raise InputError('ccd_loss got an empty tap batch')

    total = 0.0
    for group in batch.groups:
        if batch.projector is not None:
            student, teacher = batch.projector.project(group)
        else:
            student, teacher = group.student, group.teacher
        if student.shape[1] != teacher.shape[1]:
            raise InputError(f'tap {group.key}: widths {student.shape[1]} and {teacher.shape[1]} '
                             'differ and no projection is configured')
        total = total + _group_ccd(student, teacher, alpha)

    if reduction == 'mean':
        total = total / batch.size
    return total


def _check_alignment(student_trace, teacher_trace):
    if student_trace.position_mask.shape != teacher_trace.position_mask.shape \
            or not torch.equal(student_trace.position_mask, teacher_trace.position_mask):
        raise AlignmentError('teacher and student traces cover different steps')
    if not torch.equal(student_trace.target_index, teacher_trace.target_index):
        raise AlignmentError('teacher and student traces decode different targets')
    if not torch.equal(student_trace.targets, teacher_trace.targets):
        raise AlignmentError('teacher and student were teacher-forced on different tokens')


def collect_taps(student_trace, teacher_trace, cfg, projector=None):
    """
    Pair student and teacher features at the active taps of ``cfg``. Clip, Dec and Temporal
    taps pair every step position including step 0; Output taps pair every decoded target step.
    Teacher features are detached.

    `Args:`
        student_trace: ForwardTrace
        teacher_trace: ForwardTrace
        cfg: DistillConfig
        projector: TapProjector
    `Returns:`
        `TapBatch`
    """

    if cfg.mode != 'none' and not cfg.taps:
        raise ConfigError(f'distill mode {cfg.mode} needs at least one tap')
    _check_alignment(student_trace, teacher_trace)

    positions = student_trace.position_mask
    rows, steps = positions.nonzero(as_tuple=True)
    target_rows, target_steps = student_trace.target_index.unbind(dim=1)

    def per_position(kind, layer, student, teacher):
        return TapGroup(kind, layer, student[positions], teacher[positions].detach(), rows, steps)

    groups = []
    for kind in cfg.taps:
        if kind == TapKind.CLIP.value:
            groups.append(per_position(kind, 0, student_trace.clip_feats, teacher_trace.clip_feats))
        elif kind == TapKind.DEC.value:
            groups.append(per_position(kind, 0, student_trace.dec_feats, teacher_trace.dec_feats))
        elif kind == TapKind.TEMPORAL.value:
            pairs = zip(student_trace.temporal_hidden, teacher_trace.temporal_hidden)
            for layer, (student, teacher) in enumerate(pairs):
                groups.append(per_position(kind, layer, student, teacher))
        elif kind == TapKind.OUTPUT.value:
            pairs = zip(student_trace.output_hidden, teacher_trace.output_hidden)
            for layer, (student, teacher) in enumerate(pairs):
                groups.append(TapGroup(kind, layer, student, teacher.detach(), target_rows,
                                       target_steps))
        else:
            raise ConfigError(f'Unknown tap {kind}')

    batch = TapBatch(groups=groups, projector=projector)
    logger.debug(f'Collected {batch.size} tap pairs over {len(groups)} groups')
    return batch


def logits_distill_loss(student_logits, teacher_logits, temperature=1.0, mask=None):
    """
    KL(softmax(teacher / tau) || softmax(student / tau)) * tau^2, averaged over the positions
    selected by ``mask`` (all positions by default).

    `Args:`
        student_logits: tensor (..., V)
        teacher_logits: tensor (..., V)
        temperature: float
        mask: bool tensor (...), True at non-PAD positions
    `Returns:`
        scalar tensor
    """

    if student_logits.shape != teacher_logits.shape:
        raise InputError(f'logit shapes differ: {tuple(student_logits.shape)} vs '
                         f'{tuple(teacher_logits.shape)}')

    log_student = F.log_softmax(student_logits / temperature, dim=-1)
    log_teacher = F.log_softmax(teacher_logits.detach() / temperature, dim=-1)
    kl = (log_teacher.exp() * (log_teacher - log_student)).sum(dim=-1)

    if mask is None:
        mask = torch.ones_like(kl, dtype=torch.bool)
    if not mask.any():
        raise InputError('logits_distill_loss got no unmasked positions')

    return kl[mask].mean() * temperature ** 2


def feature_distill_loss(batch):
    """
    Mean over pairs of the squared Euclidean distance divided by the feature width (a
    per-dimension mean). The student side is projected when the widths differ.

    `Returns:`
        scalar tensor
    """

    if not batch.groups or batch.size == 0:
        raise InputError('feature_distill_loss got an empty tap batch')

    total = 0.0
    for group in batch.groups:
        if batch.projector is not None:
            student, teacher = batch.projector.project(group)
        else:
            student, teacher = group.student, group.teacher
        if student.shape != teacher.shape:
            raise InputError(f'tap {group.key}: paired widths differ after projection')
        total = total + ((student - teacher) ** 2).sum(dim=-1).div(student.shape[1]).sum()

    return total / batch.size


def combined_loss(caption, distill, weight):
    """
    L = L_cap + weight * L_distill.

    `Args:`
        caption: scalar tensor or float
        distill: scalar tensor or float
        weight: float
    """

    for name, value in (('caption', caption), ('distill', distill)):
        finite = bool(torch.isfinite(value).all()) if torch.is_tensor(value) \
            else math.isfinite(value)
        if not finite:
            raise NumericError(f'{name} loss is not finite', {name: float(value)})

    return caption + weight * distill


def distillation_term(cfg, student_trace, teacher_trace, projector):
    """
    The distillation loss selected by ``cfg.mode`` for one batch.

    `Returns:`
        scalar tensor (0 when the mode is ``none``)
    """

    if cfg.mode == 'none':
        return student_trace.logits.new_zeros(())
    if cfg.mode == 'logits_kl':
        _check_alignment(student_trace, teacher_trace)
        return logits_distill_loss(student_trace.logits, teacher_trace.logits, cfg.temperature,
                                   mask=student_trace.targets != PAD)

    taps = collect_taps(student_trace, teacher_trace, cfg, projector)
    if cfg.mode == 'ccd':
        return ccd_loss(taps, cfg.alpha, cfg.reduction)
    return feature_distill_loss(taps)
