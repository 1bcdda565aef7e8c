"""Versioned checkpoint container (.npz with a JSON header)

Layout, all arrays float64:

    header                 JSON string, see `_header`
    encoder.<i>.weight     (out x in) for layer i
    encoder.<i>.bias       (out,)
    decoder.<i>.weight / decoder.<i>.bias
    adversary.alpha        (2M,)   DS-AAE only
    adversary.frozen_gap   (2M,)   DS-AAE only

The random feature frequencies are never stored; they are regenerated from
the (seed, M, d, sigma) descriptor in the header.
"""
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from config import RunConfig
from ds_adversary import AdversaryState
from errors import DsaaeError, FormatError
from model_train import Autoencoder
from nn_core import Layer, MlpParams
from random_features import RandomFeatureMap

FORMAT_NAME = "dsaae-checkpoint"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: Autoencoder
    config: RunConfig
    epoch: int
    image_shape: Tuple[int, ...]
    adversary: Optional[AdversaryState] = None

    @property
    def variant(self) -> str:
        return self.config.train.variant


def _params_arrays(prefix: str, params: MlpParams) -> Dict[str, np.ndarray]:
    arrays = {}
    for i, layer in enumerate(params.layers):
        arrays[f"{prefix}.{i}.weight"] = layer.weight
        arrays[f"{prefix}.{i}.bias"] = layer.bias
    return arrays


def _header(model: Autoencoder, config: RunConfig, epoch: int, image_shape,
            adversary: Optional[AdversaryState]) -> dict:
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "variant": config.train.variant,
        "epoch": epoch,
        "input_dim": model.input_dim,
        "image_shape": list(image_shape),
        "dropout_rate": model.dropout_rate,
        "encoder": {"dims": model.encoder.dims, "activations": model.encoder.activations},
        "decoder": {"dims": model.decoder.dims, "activations": model.decoder.activations},
        "config": config.to_text(),
    }
    if adversary is not None:
        header["adversary"] = {"feature_map": adversary.map.descriptor(),
                               "base_feature_map": adversary.base_map.descriptor(),
                               **adversary.hyperparameters()}
    return header


def save_checkpoint(path: Union[str, Path], model: Autoencoder, config: RunConfig, epoch: int,
                    image_shape: Tuple[int, ...] = (), adversary: Optional[AdversaryState] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _header(model, config, epoch, image_shape or (model.input_dim,), adversary)
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    arrays.update(_params_arrays("encoder", model.encoder))
    arrays.update(_params_arrays("decoder", model.decoder))
    if adversary is not None:
        arrays["adversary.alpha"] = adversary.alpha
        arrays["adversary.frozen_gap"] = adversary.frozen_gap
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    return path


def _load_params(archive, prefix: str, spec: dict) -> MlpParams:
    layers = []
    for i, activation in enumerate(spec["activations"]):
        weight = np.array(archive[f"{prefix}.{i}.weight"], dtype=np.float64)
        bias = np.array(archive[f"{prefix}.{i}.bias"], dtype=np.float64)
        layers.append(Layer(weight, bias, activation))
    params = MlpParams(layers)
    if params.dims != list(spec["dims"]):
        raise FormatError(f"{prefix} dims {params.dims} disagree with header {spec['dims']}")
    return params


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint

    Raises:
        FormatError: unreadable archive, missing entries or unknown format/version
    """
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            header = json.loads(str(archive["header"]))
            if header.get("format") != FORMAT_NAME:
                raise FormatError(f"{path}: not a {FORMAT_NAME} file")
            if header.get("version") != FORMAT_VERSION:
                raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
            encoder = _load_params(archive, "encoder", header["encoder"])
            decoder = _load_params(archive, "decoder", header["decoder"])
            config = RunConfig.from_text(header["config"])
            adversary = None
            if "adversary" in header:
                adv = header["adversary"]
                adversary = AdversaryState(
                    map=RandomFeatureMap.from_descriptor(adv["feature_map"]),
                    alpha=np.array(archive["adversary.alpha"], dtype=np.float64),
                    frozen_gap=np.array(archive["adversary.frozen_gap"], dtype=np.float64),
                    ascent_lr=adv["ascent_lr"], l2_decay=adv["l2_decay"], alpha_cap=adv["alpha_cap"],
                    resample_features=adv["resample_features"],
                    base_map=RandomFeatureMap.from_descriptor(adv["base_feature_map"]),
                )
            model = Autoencoder(encoder, decoder, float(header["dropout_rate"]))
            return Checkpoint(model=model, config=config, epoch=int(header["epoch"]),
                              image_shape=tuple(header["image_shape"]), adversary=adversary)
    except FormatError:
        raise
    except FileNotFoundError:
        raise
    except (OSError, KeyError, ValueError, TypeError, zipfile.BadZipFile, DsaaeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint ({exc})") from exc
