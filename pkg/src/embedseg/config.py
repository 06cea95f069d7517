"""Hyperparameter profiles, config-file handling and seeded subsystem streams.

Two segmentation profiles are shipped: `small-vocab` (20 ms boundary grid,
200 ms to 1 s words, reference-vector eigenmaps embeddings refined over outer
passes, 25+25 sampling iterations with 5 linear annealing steps) and
`large-vocab` (syllable-constrained boundaries, up to 6 units per word,
downsampled embeddings, 15+15 iterations with annealing exponents
[0.01, 0.5, 1]). Correspondence-autoencoder training ships `cae-conversational`
(batch 256, 30 pretraining epochs at 250e-6, 120 correspondence epochs at
2e-3) and `cae-large` (batch 2048, 5 pretraining epochs at 2e-3, 120
correspondence epochs at 32e-3, nine 100-unit hidden layers with a 13-unit
bottleneck eighth).

Config files are flat `key = value` text; keys may carry a subcommand prefix
(`segment.n_chains = 5`). Command-line flags override file values, which
override profile values. The master seed is split into named subsystem
streams so that, e.g., changing the chain count does not perturb the
embedding noise.
"""

import hashlib

import numpy as np

SEGMENT_PROFILES = {
    "small-vocab": dict(
        constraint_mode="grid",
        interval_ms=20.0,
        min_dur_ms=200.0,
        max_dur_ms=1000.0,
        max_units=6,
        backend="eigenmaps",
        K=100,
        k_fraction=None,
        sigma_sq=0.005,
        kappa0=0.05,
        alpha_a=1.0,
        d_emb=11,
        knn_k=30,
        sigma_kernel=0.04,
        reg_xi=2.0,
        n_ref=8000,
        noise_factor=0.05,
        iters_fixed=25,
        iters=25,
        exponents=list(np.linspace(0.01, 1.0, 5)),
        n_chains=5,
        refine_passes=3,
        n_discovered=4000,
        n_random=4000,
        p_boundary_init=0.25,
        lm_mode="unigram",
        lambda_interp=0.1,
        b_bi=1.0,
        eta=1.0,
        n_keep=10,
    ),
    "large-vocab": dict(
        constraint_mode="syllable",
        interval_ms=20.0,
        min_dur_ms=0.0,
        max_dur_ms=1e9,
        max_units=6,
        backend="downsample",
        K=None,
        k_fraction=0.20,
        sigma_sq=1e-3,
        kappa0=0.05,
        alpha_a=1.0,
        d_emb=11,
        knn_k=30,
        sigma_kernel=0.04,
        reg_xi=2.0,
        n_ref=8000,
        noise_factor=0.05,
        iters_fixed=15,
        iters=15,
        exponents=[0.01, 0.5, 1.0],
        n_chains=5,
        refine_passes=1,
        n_discovered=4000,
        n_random=4000,
        p_boundary_init=0.25,
        lm_mode="unigram",
        lambda_interp=0.1,
        b_bi=1.0,
        eta=1.0,
        n_keep=10,
    ),
}

# For 130-dimensional downsampled spectral embeddings sigma_sq = 1e-3; learned
# bottleneck features want the tighter 1e-4.
SIGMA_SQ_CAE_FEATURES = 1e-4

# Speaker-independent runs size the component count as a smaller fraction of
# the syllable tokens than speaker-dependent ones.
K_FRACTION_SPEAKER_DEP = 0.20
K_FRACTION_SPEAKER_INDEP = 0.05

CAE_PROFILES = {
    "cae-conversational": dict(
        batch_size=256,
        epochs_pretrain=30,
        lr_pretrain=250e-6,
        epochs_cae=120,
        lr_cae=2e-3,
        hidden_dims=[100] * 9,
        encode_layer=9,
        both_directions=False,
    ),
    "cae-large": dict(
        batch_size=2048,
        epochs_pretrain=5,
        lr_pretrain=2e-3,
        epochs_cae=120,
        lr_cae=32e-3,
        hidden_dims=[100] * 7 + [13] + [100],
        encode_layer=8,
        both_directions=True,
    ),
}


def parse_config_file(path):
    """Read flat `key = value` lines into a string dict; `#` comments allowed."""
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError("%s line %d: expected 'key = value'" % (path, lineno))
            key, value = text.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def lookup(file_cfg, section, name):
    """File-config lookup: the section-prefixed key wins over the bare key."""
    for key in ("%s.%s" % (section, name), name):
        if key in file_cfg:
            return file_cfg[key]
    return None


def seed_sequence(master_seed, stream_name, *indices):
    """A named, index-addressable child of the master seed."""
    tag = int.from_bytes(
        hashlib.sha256(stream_name.encode("utf-8")).digest()[:8], "little"
    )
    return np.random.SeedSequence(
        [int(master_seed), tag] + [int(i) for i in indices]
    )


def subsystem_rng(master_seed, stream_name, *indices):
    """Generator for one named subsystem stream."""
    return np.random.default_rng(seed_sequence(master_seed, stream_name, *indices))


def subsystem_seed_int(master_seed, stream_name, *indices):
    """Stable integer seed for subsystems that key their own streams."""
    return int(seed_sequence(master_seed, stream_name, *indices).generate_state(1)[0])
