"""Frame-level feature corpora: on-disk formats, validation and normalization.

A corpus is a list of utterances, each a matrix of acoustic feature frames
(rows are frames). Feature files are plain text: a header line

    id speaker dim n_frames frame_period_ms

followed by one whitespace-separated row of `dim` values per frame. A corpus
is described by a list file containing one feature-file path per line
(relative paths are resolved against the list file's directory). Ground-truth
alignments use lines `utt_id start_frame end_frame label`; `#` starts a
comment.
"""

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)


class CorpusError(Exception):
    """Raised for malformed feature files, alignments or corpus violations."""


class Utterance:
    """A single utterance of acoustic feature frames.

    Parameters
    ----------
    utterance_id : str
    speaker : str
    frames : array of shape (n_frames, dim)
        Every value must be finite and n_frames >= 1.
    frame_period_ms : float
        Duration of one frame in milliseconds (default 10).
    """

    __slots__ = ("id", "speaker", "frames", "frame_period_ms")

    def __init__(self, utterance_id, speaker, frames, frame_period_ms=10.0):
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise CorpusError(
                "utterance '%s': frames must be a non-empty 2-D matrix" % utterance_id
            )
        bad = ~np.isfinite(frames)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise CorpusError(
                "utterance '%s': non-finite value at frame %d, dim %d"
                % (utterance_id, i, j)
            )
        if frame_period_ms <= 0:
            raise CorpusError("utterance '%s': frame_period_ms must be positive" % utterance_id)
        self.id = utterance_id
        self.speaker = speaker
        self.frames = frames
        self.frame_period_ms = float(frame_period_ms)

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]

    def __repr__(self):
        return "Utterance(id=%r, speaker=%r, %d x %d)" % (
            self.id, self.speaker, self.n_frames, self.dim,
        )


class Corpus:
    """An ordered collection of utterances with a common feature dimension."""

    def __init__(self, utterances):
        if not utterances:
            raise CorpusError("corpus must contain at least one utterance")
        dims = {u.dim for u in utterances}
        if len(dims) != 1:
            raise CorpusError(
                "inconsistent feature dimensions across corpus: %s"
                % sorted(dims)
            )
        ids = [u.id for u in utterances]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise CorpusError("duplicate utterance ids: %s" % dup)
        self.utterances = list(utterances)
        self.dim = utterances[0].dim
        self._by_id = {u.id: u for u in self.utterances}

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __getitem__(self, utterance_id):
        try:
            return self._by_id[utterance_id]
        except KeyError:
            raise CorpusError("unknown utterance id '%s'" % utterance_id) from None

    def __contains__(self, utterance_id):
        return utterance_id in self._by_id

    @property
    def speakers(self):
        return sorted({u.speaker for u in self.utterances})


class TokenAlignment:
    """A ground-truth token: `[start_frame, end_frame)` of an utterance."""

    __slots__ = ("utterance_id", "start_frame", "end_frame", "label")

    def __init__(self, utterance_id, start_frame, end_frame, label):
        if start_frame < 0 or end_frame <= start_frame:
            raise CorpusError(
                "alignment for '%s': need 0 <= start < end, got [%d, %d)"
                % (utterance_id, start_frame, end_frame)
            )
        self.utterance_id = utterance_id
        self.start_frame = int(start_frame)
        self.end_frame = int(end_frame)
        self.label = label

    def __repr__(self):
        return "TokenAlignment(%r, %d, %d, %r)" % (
            self.utterance_id, self.start_frame, self.end_frame, self.label,
        )

    def __eq__(self, other):
        return (
            isinstance(other, TokenAlignment)
            and self.utterance_id == other.utterance_id
            and self.start_frame == other.start_frame
            and self.end_frame == other.end_frame
            and self.label == other.label
        )

    def __hash__(self):
        return hash((self.utterance_id, self.start_frame, self.end_frame, self.label))


def frames_from_ms(duration_ms, frame_period_ms):
    """Convert a duration in milliseconds to a frame count (nearest frame)."""
    return int(round(duration_ms / frame_period_ms))


def _parse_feature_file(path):
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 5:
            raise CorpusError(
                "%s: expected header 'id speaker dim n_frames frame_period_ms'" % path
            )
        utt_id, speaker = header[0], header[1]
        try:
            dim, n_frames = int(header[2]), int(header[3])
            frame_period_ms = float(header[4])
        except ValueError:
            raise CorpusError("%s: malformed header %r" % (path, header)) from None
        rows = []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            values = line.split()
            if len(values) != dim:
                raise CorpusError(
                    "%s line %d: expected %d values, got %d"
                    % (path, lineno, dim, len(values))
                )
            rows.append([float(v) for v in values])
    if len(rows) != n_frames:
        raise CorpusError(
            "%s: header says %d frames, found %d" % (path, n_frames, len(rows))
        )
    return Utterance(utt_id, speaker, np.array(rows, dtype=np.float64), frame_period_ms)


def load_feature_corpus(list_path):
    """Load a corpus from a list file of feature-file paths.

    Utterance order follows list order. Raises `CorpusError` naming the
    offending utterance for missing files, dimension mismatches or non-finite
    values.
    """
    if not os.path.exists(list_path):
        raise CorpusError("list file not found: %s" % list_path)
    base = os.path.dirname(os.path.abspath(list_path))
    utterances = []
    with open(list_path) as f:
        for line in f:
            entry = line.strip()
            if not entry or entry.startswith("#"):
                continue
            path = entry if os.path.isabs(entry) else os.path.join(base, entry)
            if not os.path.exists(path):
                raise CorpusError("feature file not found: %s" % path)
            utterances.append(_parse_feature_file(path))
    logger.info("Loaded %d utterances from %s", len(utterances), list_path)
    return Corpus(utterances)


def _format_row(values):
    return " ".join(repr(float(v)) for v in values)


def save_feature_file(utterance, path):
    """Write one utterance in the plain-text feature format (round-trip exact)."""
    with open(path, "w") as f:
        f.write(
            "%s %s %d %d %s\n"
            % (
                utterance.id,
                utterance.speaker,
                utterance.dim,
                utterance.n_frames,
                repr(utterance.frame_period_ms),
            )
        )
        for row in utterance.frames:
            f.write(_format_row(row) + "\n")


def save_corpus(corpus, directory, list_name="corpus.lst"):
    """Write every utterance to `directory` plus a list file; returns its path."""
    os.makedirs(directory, exist_ok=True)
    list_path = os.path.join(directory, list_name)
    with open(list_path, "w") as f:
        for utt in corpus:
            fname = "%s.feats" % utt.id
            save_feature_file(utt, os.path.join(directory, fname))
            f.write(fname + "\n")
    return list_path


def apply_cmvn(corpus, group_by="speaker"):
    """Mean/variance-normalize each feature dimension within each group.

    `group_by` is "speaker" or "utterance". After the call every dimension has
    zero mean and unit sample variance within its group; zero-variance
    dimensions are mean-subtracted only. Every group needs at least 2 frames.
    """
    if group_by not in ("speaker", "utterance"):
        raise CorpusError("group_by must be 'speaker' or 'utterance', got %r" % group_by)

    groups = {}
    for utt in corpus:
        key = utt.speaker if group_by == "speaker" else utt.id
        groups.setdefault(key, []).append(utt)

    normalized = {}
    for key, members in groups.items():
        stacked = np.concatenate([u.frames for u in members], axis=0)
        if stacked.shape[0] < 2:
            raise CorpusError(
                "CMVN group '%s' has a single frame; need at least 2" % key
            )
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0, ddof=1)
        safe = np.where(std > 0, std, 1.0)
        for utt in members:
            normalized[utt.id] = (utt.frames - mean) / safe

    return Corpus(
        [
            Utterance(u.id, u.speaker, normalized[u.id], u.frame_period_ms)
            for u in corpus
        ]
    )


def load_alignments(path, corpus, level="word"):
    """Load token alignments, validated against `corpus`.

    Returns alignments sorted by (utterance_id, start_frame). At word level,
    tokens within an utterance must not overlap; phone-level files skip the
    overlap check (tolerating e.g. cross-word ambisyllabicity in external
    annotations).
    """
    alignments = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 4:
                raise CorpusError(
                    "%s line %d: expected 'utt_id start end label'" % (path, lineno)
                )
            utt_id, start, end, label = parts[0], int(parts[1]), int(parts[2]), parts[3]
            if utt_id not in corpus:
                raise CorpusError(
                    "%s line %d: unknown utterance '%s'" % (path, lineno, utt_id)
                )
            if end > corpus[utt_id].n_frames:
                raise CorpusError(
                    "%s line %d: token end %d exceeds utterance '%s' length %d"
                    % (path, lineno, end, utt_id, corpus[utt_id].n_frames)
                )
            alignments.append(TokenAlignment(utt_id, start, end, label))

    alignments.sort(key=lambda a: (a.utterance_id, a.start_frame, a.end_frame))
    if level == "word":
        previous = None
        for token in alignments:
            if (
                previous is not None
                and previous.utterance_id == token.utterance_id
                and token.start_frame < previous.end_frame
            ):
                raise CorpusError(
                    "overlapping word tokens in '%s': %r and %r"
                    % (token.utterance_id, previous, token)
                )
            previous = token
    return alignments


def save_alignments(alignments, path):
    with open(path, "w") as f:
        for a in alignments:
            f.write("%s %d %d %s\n" % (a.utterance_id, a.start_frame, a.end_frame, a.label))
