"""
Model checkpoints.

A checkpoint is a single ``torch.save`` archive holding a dict with two entries:

- ``header``: ``{"schema_version", "config" (ModelConfig fields), "modality", "vocab_hash",
  "parameter_hash", "provenance"}``, plain JSON-compatible values only
- ``state_dict``: parameter name -> tensor, in module registration order. The output module
  appears once (``output_module.*``) and is reused at every step.

Loading uses ``weights_only=True``, so nothing but tensors and primitive containers is unpickled.
"""

from __future__ import annotations

import hashlib
import logging
import pickle

import torch

from ccd_anticipation.errors import DataError, VersionError
from ccd_anticipation.model import AnticipationModel, ModelConfig

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1


def parameter_hash(module):
    """sha256 over the names and raw bytes of every parameter and buffer of ``module``."""

    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        digest.update(name.encode('utf-8'))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def save_checkpoint(model, path, provenance=None):
    """
    `Args:`
        model: AnticipationModel
        path: str
        provenance: dict
            Config snapshot, seed, role and anything else worth keeping with the weights
    `Returns:`
        str
            The path of the new file
    """

    header = {
        'schema_version': CHECKPOINT_SCHEMA_VERSION,
        'config': model.config.to_dict(),
        'modality': model.modality,
        'vocab_hash': model.vocab_hash,
        'parameter_hash': parameter_hash(model),
        'provenance': provenance or {},
    }
    torch.save({'header': header, 'state_dict': model.state_dict()}, str(path))
    logger.info(f'Saved {model.modality} checkpoint to {path}')
    return str(path)


def _read(path):
    try:
        payload = torch.load(str(path), map_location='cpu', weights_only=True)
    except (RuntimeError, EOFError, ValueError, pickle.UnpicklingError) as e:
        raise DataError(f'Could not read checkpoint {path}: {e}')

    if not isinstance(payload, dict) or 'header' not in payload or 'state_dict' not in payload:
        raise DataError(f'{path} is not a checkpoint')
    return payload


def load_checkpoint(path, vocab=None, expected_config=None):
    """
    Load a model checkpoint.

    `Args:`
        path: str
        vocab: Vocab
            When given, the checkpoint's vocabulary hash must match it
        expected_config: ModelConfig
            When given, the stored config must equal it
    `Returns:`
        `AnticipationModel` in eval mode
    """

    payload = _read(path)
    header = payload['header']

    if header.get('schema_version') != CHECKPOINT_SCHEMA_VERSION:
        raise VersionError(f'Checkpoint schema version {header.get("schema_version")} is not '
                           f'{CHECKPOINT_SCHEMA_VERSION}')

    config = ModelConfig(**header['config'])
    if expected_config is not None and config != expected_config:
        raise VersionError(f'Checkpoint config {config} does not match {expected_config}')
    if vocab is not None and header['vocab_hash'] != vocab.hash():
        raise VersionError(f'Checkpoint {path} was built for a different vocabulary')

    model = AnticipationModel(config, vocab_hash=header['vocab_hash'])
    model.load_state_dict(payload['state_dict'])
    stored_hash = header.get('parameter_hash')
    if stored_hash is not None and parameter_hash(model) != stored_hash:
        raise DataError(f'Checkpoint {path} weights do not match their recorded hash')
    model.provenance = header.get('provenance', {})
    model.eval()
    return model
