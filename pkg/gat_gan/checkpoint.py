"""
Single-file checkpoint container.

Layout: 8-byte magic, header length as little-endian uint64, canonical JSON
header, sha256 of the header text (32 bytes), then the payload of
little-endian float64 arrays in header order. The header names every array
with its shape, element offset and count, and carries the sha256 of the payload.
"""
import hashlib
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .layers import TransformerEmbedder
from .model import GatGanModel, ModelConfig
from .training import Trainer
from .util import canonical_json, validate_json

logger = logging.getLogger(__name__)

MAGIC = b'GATGANCK'
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype('<f8')
DIGEST_BYTES = 32


@dataclass
class Checkpoint:
    kind: str
    config: dict
    epoch: int = 0
    rng_state: dict = None
    extra: dict = field(default_factory=dict)
    arrays: OrderedDict = field(default_factory=OrderedDict)
    digest: str = ''
    path: str = ''


def file_digest(path):
    with open(path, 'rb') as handle:
        return hashlib.sha256(handle.read()).hexdigest()


def encode_container(checkpoint):
    """
    * Serializes a checkpoint to bytes; equal checkpoints give equal bytes.
    * @param {Checkpoint} checkpoint Arrays are written in insertion order
    * @returns {bytes}
    """
    tensors = []
    chunks = []
    offset = 0
    for name, array in checkpoint.arrays.items():
        values = np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE)
        tensors.append({'name': name, 'shape': list(values.shape), 'offset': offset, 'count': int(values.size)})
        chunks.append(values.tobytes())
        offset += int(values.size)
    payload = b''.join(chunks)
    header = {
        'format_version': FORMAT_VERSION,
        'kind': checkpoint.kind,
        'config': checkpoint.config,
        'epoch': int(checkpoint.epoch),
        'rng_state': checkpoint.rng_state,
        'extra': checkpoint.extra,
        'tensors': tensors,
        'payload_bytes': len(payload),
        'payload_digest': hashlib.sha256(payload).hexdigest(),
    }
    text = canonical_json(header).encode('utf-8')
    return MAGIC + struct.pack('<Q', len(text)) + text + hashlib.sha256(text).digest() + payload


def decode_container(blob, source='<bytes>'):
    """
    * Parses and verifies a container. Nothing is returned unless every check
    * passes: version, header digest, header schema, payload digest.
    * @returns {Checkpoint}
    """
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError('header', f'{source} is not a checkpoint container')
    start = len(MAGIC) + 8
    if len(blob) < start:
        raise CheckpointError('header', f'{source} is truncated')
    (length,) = struct.unpack('<Q', blob[len(MAGIC):start])
    text = blob[start:start + length]
    stored_digest = blob[start + length:start + length + DIGEST_BYTES]
    payload = blob[start + length + DIGEST_BYTES:]
    try:
        header = json.loads(text.decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as error:
        raise CheckpointError('header', f'{source}: unreadable header: {error}') from error
    if not isinstance(header, dict):
        raise CheckpointError('header', f'{source}: header is not an object')
    version = header.get('format_version')
    if version != FORMAT_VERSION:
        raise CheckpointError('version', f'{source} has format version {version}; '
                                         f'this build reads version {FORMAT_VERSION}')
    if hashlib.sha256(text).digest() != stored_digest:
        raise CheckpointError('header', f'{source}: header digest mismatch')
    validate_json(header, 'checkpoint_header', lambda where, message: CheckpointError('header', message))
    if len(payload) != header['payload_bytes'] or hashlib.sha256(payload).hexdigest() != header['payload_digest']:
        raise CheckpointError('payload', f'{source}: payload digest mismatch')

    values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE)
    arrays = OrderedDict()
    for entry in header['tensors']:
        begin, count = entry['offset'], entry['count']
        if begin + count > len(values) or int(np.prod(entry['shape'], dtype=np.int64)) != count:
            raise CheckpointError('payload', f'{source}: tensor {entry["name"]} does not fit the payload')
        arrays[entry['name']] = values[begin:begin + count].reshape(entry['shape']).astype(np.float64)
    return Checkpoint(header['kind'], header['config'], header['epoch'], header['rng_state'],
                      header.get('extra', {}), arrays, hashlib.sha256(blob).hexdigest(), source)


def write_checkpoint(checkpoint, path):
    blob = encode_container(checkpoint)
    with open(path, 'wb') as handle:
        handle.write(blob)
    checkpoint.digest = hashlib.sha256(blob).hexdigest()
    checkpoint.path = str(path)
    logger.debug('wrote %s checkpoint %s (%d arrays)', checkpoint.kind, path, len(checkpoint.arrays))
    return checkpoint.digest


def load_checkpoint(path, kind=None):
    try:
        with open(path, 'rb') as handle:
            blob = handle.read()
    except OSError as error:
        raise CheckpointError('header', f'cannot read {path}: {error}') from error
    checkpoint = decode_container(blob, str(path))
    if kind and checkpoint.kind != kind:
        raise CheckpointError('header', f'{path} holds a {checkpoint.kind} checkpoint, expected {kind}')
    return checkpoint


def _module_arrays(module):
    arrays = OrderedDict()
    for name, param in module.named_parameters():
        arrays[f'param/{name}'] = param.values
    for name, buffer in module.named_buffers():
        arrays[f'buffer/{name}'] = buffer
    return arrays


def _load_module_arrays(module, arrays, source):
    expected = _module_arrays(module)
    missing = [name for name in expected if name not in arrays]
    if missing:
        raise CheckpointError('payload', f'{source} lacks {", ".join(missing[:3])}')
    for name, param in module.named_parameters():
        if param.values.shape != arrays[f'param/{name}'].shape:
            raise CheckpointError('payload', f'{source}: parameter {name} has shape '
                                             f'{list(arrays[f"param/{name}"].shape)}, expected {list(param.shape)}')
        param.values[...] = arrays[f'param/{name}']
    for name, _ in list(module.named_buffers()):
        module.load_buffer(name, arrays[f'buffer/{name}'])


def save_checkpoint(model, path, trainer=None, extra=None):
    """
    * Certifies the spectral layers, then saves a GAT-GAN model, optionally with the optimizer
    * state and random streams of its trainer.
    * @param {GatGanModel} model The model
    * @param {string} path Output file
    * @param {Trainer} trainer Optional training state
    * @param {dict} extra JSON-serializable metadata (normalization params, feature names)
    * @returns {string} sha256 of the written file
    """
    model.certify()
    arrays = _module_arrays(model)
    extra = dict(extra or {})
    rng_state = None
    if trainer is not None:
        for name, array in trainer.optimizer_arrays():
            arrays[f'optimizer/{name}'] = array
        extra['optimizer_steps'] = {name: state.step for name, state in trainer.states.items()}
        extra['training'] = trainer.config.to_dict()
        rng_state = trainer.streams.state()
    checkpoint = Checkpoint('gat_gan', model.config.to_dict(), model.epochs_trained, rng_state, extra, arrays)
    return write_checkpoint(checkpoint, path)


def restore_model(checkpoint):
    """ Rebuilds the model held by a loaded gat_gan checkpoint """
    if checkpoint.kind != 'gat_gan':
        raise CheckpointError('header', f'{checkpoint.path} holds a {checkpoint.kind} checkpoint')
    model = GatGanModel(ModelConfig.from_dict(checkpoint.config))
    _load_module_arrays(model, checkpoint.arrays, checkpoint.path)
    for layer in model.encoder.spectral_layers():
        layer.mark_certified()
    model.epochs_trained = checkpoint.epoch
    return model


def restore_trainer(checkpoint, model, config):
    """ Trainer whose Adam moments, step counters and random streams continue from the checkpoint """
    trainer = Trainer(model, config)
    steps = checkpoint.extra.get('optimizer_steps', {})
    for network, state in trainer.states.items():
        state.step = int(steps.get(network, 0))
        prefix = f'optimizer/{network}.'
        for name in checkpoint.arrays:
            if name.startswith(prefix) and name.endswith('.m'):
                param_name = name[len(prefix):-2]
                state.moments[param_name] = (checkpoint.arrays[name].copy(),
                                             checkpoint.arrays[f'{prefix}{param_name}.v'].copy())
    if checkpoint.rng_state:
        for purpose, state in checkpoint.rng_state.items():
            getattr(trainer.streams, purpose).bit_generator.state = state
    return trainer


def save_embedder(embedder, path, history=None, extra=None):
    config = {'features': embedder.features, 'width': embedder.width, 'heads': embedder.heads,
              'blocks': embedder.blocks, 'positional': embedder.positional}
    extra = dict(extra or {})
    extra['trained'] = bool(embedder.trained)
    if history is not None:
        extra['history'] = history
    checkpoint = Checkpoint('embedder', config, history[-1]['epoch'] if history else 0, None, extra,
                            _module_arrays(embedder))
    return write_checkpoint(checkpoint, path)


def restore_embedder(checkpoint):
    if checkpoint.kind != 'embedder':
        raise CheckpointError('header', f'{checkpoint.path} holds a {checkpoint.kind} checkpoint, expected embedder')
    config = checkpoint.config
    embedder = TransformerEmbedder(config['features'], np.random.default_rng(0), config['width'],
                                   config['heads'], config['blocks'], config['positional'])
    _load_module_arrays(embedder, checkpoint.arrays, checkpoint.path)
    embedder.trained = bool(checkpoint.extra.get('trained', False))
    embedder.eval()
    return embedder
