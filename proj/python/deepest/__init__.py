"""Emotional voice conversion toolkit.

The compiled core provides the WORLD-style vocoder, spectral normalisation,
mel-cepstral distortion, log-Gaussian F0 conversion, listening-test
aggregation and the full command-line pipeline through ``run_cli``.
"""

import json

from ._core import (
    MCD_SCALE,
    SAMPLE_RATE,
    DeepestError,
    aggregate_mos,
    aggregate_preference,
    analyze,
    cli_commands,
    cluster_purity,
    convert_f0,
    dtw_align,
    mcd,
    mcep,
    read_wav,
    run_cli,
    sp_denormalize,
    sp_normalize,
    synthesize,
    toy_utterance,
    write_wav,
)

__all__ = [
    "MCD_SCALE",
    "SAMPLE_RATE",
    "DeepestError",
    "aggregate_mos",
    "aggregate_preference",
    "analyze",
    "cli",
    "cli_commands",
    "cluster_purity",
    "convert_f0",
    "dtw_align",
    "mcd",
    "mcep",
    "read_wav",
    "run_cli",
    "sp_denormalize",
    "sp_normalize",
    "synthesize",
    "toy_utterance",
    "write_wav",
]


def cli(*args):
    """Runs one pipeline command and returns its JSON summary.

    Raises DeepestError carrying the command's error code on failure.
    """
    status, out, err = run_cli([str(a) for a in args])
    if status != 0:
        info = json.loads(err.splitlines()[0])
        exc = DeepestError(f"{info['error']}: {info['message']}")
        exc.code = info["error"]
        raise exc
    return json.loads(out.splitlines()[0])
