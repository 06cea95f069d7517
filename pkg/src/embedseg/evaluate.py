"""Evaluation of discovered segmentations against ground-truth alignments.

Discovered clusters are compared to truth labels through a mapping matrix
(frame- or token-level co-occurrence counts), from which cluster purity,
many-to-one and greedy one-to-one word error rates are computed. Boundary,
token and type precision/recall/F follow the phoneme-mapping convention: a
discovered token is mapped to the truth phonemes it covers by at least half
the phoneme's duration or a fixed frame overlap. The normalized edit distance
averages phoneme-string dissimilarity over within-cluster pairs, and the
same-different average precision scores representations on whether distance
separates same-type from different-type word pairs.

Predictions are passed as {utt_id: [((start, end), cluster_id), ...]}.
"""

import itertools
import logging

import numpy as np

from .dtw import cosine_distance, dtw_cost

logger = logging.getLogger(__name__)

BACKGROUND = "__background__"


class MappingMatrix:
    """Truth-label x discovered-cluster co-occurrence counts."""

    def __init__(self, counts, labels, clusters, unit):
        self.counts = np.asarray(counts, dtype=np.int64)
        self.labels = list(labels)
        self.clusters = list(clusters)
        self.unit = unit

    @property
    def real_rows(self):
        """Row indices of genuine labels (the background row excluded)."""
        return [i for i, lab in enumerate(self.labels) if lab != BACKGROUND]


def _truth_by_utt(alignments):
    by_utt = {}
    for token in alignments:
        by_utt.setdefault(token.utterance_id, []).append(token)
    for tokens in by_utt.values():
        tokens.sort(key=lambda t: (t.start_frame, t.end_frame))
    return by_utt


def build_mapping_matrix(pred, truth, unit="frames"):
    """Count label/cluster co-occurrence at frame or token granularity.

    Frame unit: each predicted frame is paired with the truth label covering
    it. Token unit: each predicted token votes once for the label of the truth
    token it overlaps most (ties go to the earlier truth token). Frames or
    tokens outside truth coverage fall onto a reserved background row and a
    warning is logged.
    """
    if unit not in ("frames", "tokens"):
        raise ValueError("unit must be 'frames' or 'tokens'")
    truth_by_utt = _truth_by_utt(truth)
    labels = sorted({t.label for t in truth})
    clusters = sorted({k for spans in pred.values() for _, k in spans})
    label_index = {lab: i for i, lab in enumerate(labels)}
    cluster_index = {k: j for j, k in enumerate(clusters)}

    counts = np.zeros((len(labels) + 1, len(clusters)), dtype=np.int64)
    background_row = len(labels)
    background_hits = 0

    for utt_id, spans in pred.items():
        tokens = truth_by_utt.get(utt_id, [])
        if unit == "frames":
            length = max(
                [e for (s, e), _ in spans] + [t.end_frame for t in tokens], default=0
            )
            frame_label = np.full(length, background_row, dtype=np.int64)
            for t in tokens:
                frame_label[t.start_frame:t.end_frame] = label_index[t.label]
            for (s, e), k in spans:
                j = cluster_index[k]
                rows, freq = np.unique(frame_label[s:e], return_counts=True)
                for row, n in zip(rows, freq):
                    counts[row, j] += n
                    if row == background_row:
                        background_hits += n
        else:
            for (s, e), k in spans:
                best, best_overlap = None, 0
                for t in tokens:
                    overlap = min(e, t.end_frame) - max(s, t.start_frame)
                    if overlap > best_overlap:
                        best, best_overlap = t, overlap
                row = label_index[best.label] if best is not None else background_row
                if best is None:
                    background_hits += 1
                counts[row, cluster_index[k]] += 1

    if background_hits:
        logger.warning(
            "%d predicted %s fall outside truth coverage (counted against a "
            "background row)", background_hits, unit,
        )
    return MappingMatrix(counts, labels + [BACKGROUND], clusters, unit)


def map_clusters(mapping, mode="one_to_one_greedy"):
    """Map discovered clusters to truth labels.

    many_to_one: every cluster takes its most frequent label. one_to_one_greedy:
    repeatedly bind the globally largest remaining cell, striking its row and
    column; leftover clusters map to None. Ties break to the lowest label
    index, then the lowest cluster index.
    """
    if mode not in ("many_to_one", "one_to_one_greedy"):
        raise ValueError("unknown mapping mode %r" % mode)
    rows = mapping.real_rows
    counts = mapping.counts
    result = {k: None for k in mapping.clusters}
    if not rows:
        return result

    if mode == "many_to_one":
        for j, cluster in enumerate(mapping.clusters):
            column = counts[rows, j]
            if column.max() > 0:
                result[cluster] = mapping.labels[rows[int(np.argmax(column))]]
        return result

    free_rows = set(rows)
    free_cols = set(range(len(mapping.clusters)))
    while free_rows and free_cols:
        best = None
        for i in sorted(free_rows):
            for j in sorted(free_cols):
                if counts[i, j] > 0 and (best is None or counts[i, j] > counts[best[0], best[1]]):
                    best = (i, j)
        if best is None:
            break
        i, j = best
        result[mapping.clusters[j]] = mapping.labels[i]
        free_rows.discard(i)
        free_cols.discard(j)
    return result


def cluster_purity(mapping):
    """Proportion of frames/tokens whose cluster's dominant label is their own."""
    total = int(mapping.counts.sum())
    if total == 0:
        raise ValueError("empty mapping matrix")
    rows = mapping.real_rows
    return float(mapping.counts[rows].max(axis=0).sum()) / total


def speaker_gender_purity(pred, corpus, gender_of_speaker=None):
    """Token-level speaker purity, and gender purity when metadata is given.

    Both use the purity formula with speakers (or genders) as rows: 1.0 means
    every cluster is single-speaker (single-gender).
    """
    clusters = sorted({k for spans in pred.values() for _, k in spans})
    cluster_index = {k: j for j, k in enumerate(clusters)}
    speakers = corpus.speakers
    speaker_index = {s: i for i, s in enumerate(speakers)}
    counts = np.zeros((len(speakers), len(clusters)), dtype=np.int64)
    for utt_id, spans in pred.items():
        i = speaker_index[corpus[utt_id].speaker]
        for _, k in spans:
            counts[i, cluster_index[k]] += 1
    if counts.sum() == 0:
        raise ValueError("no predicted tokens")
    speaker_purity = float(counts.max(axis=0).sum()) / counts.sum()

    gender_purity = None
    if gender_of_speaker is not None:
        genders = sorted(set(gender_of_speaker.values()))
        gidx = {g: i for i, g in enumerate(genders)}
        gcounts = np.zeros((len(genders), len(clusters)), dtype=np.int64)
        for s, i in speaker_index.items():
            gcounts[gidx[gender_of_speaker[s]]] += counts[i]
        gender_purity = float(gcounts.max(axis=0).sum()) / gcounts.sum()
    return speaker_purity, gender_purity


def _edit_ops(truth_seq, pred_seq):
    """Levenshtein alignment; returns (substitutions, deletions, insertions).

    A None prediction label never matches. Backtrace prefers the diagonal,
    then deletion, then insertion.
    """
    n, m = len(truth_seq), len(pred_seq)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            match = pred_seq[j - 1] is not None and truth_seq[i - 1] == pred_seq[j - 1]
            dist[i, j] = min(
                dist[i - 1, j - 1] + (0 if match else 1),
                dist[i - 1, j] + 1,
                dist[i, j - 1] + 1,
            )
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            match = pred_seq[j - 1] is not None and truth_seq[i - 1] == pred_seq[j - 1]
            if dist[i, j] == dist[i - 1, j - 1] + (0 if match else 1):
                if not match:
                    subs += 1
                i, j = i - 1, j - 1
                continue
        if i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            dels += 1
            i -= 1
            continue
        ins += 1
        j -= 1
    return subs, dels, ins


def wer(mapped_pred_sequences, truth_sequences):
    """Word error rate over mapped per-utterance label sequences.

    Returns (wer, substitutions, deletions, insertions, n_truth_tokens).
    Tokens of unmapped clusters (label None) always count as errors.
    """
    total_n = sum(len(seq) for seq in truth_sequences.values())
    if total_n == 0:
        raise ValueError("empty truth corpus")
    S = D = I = 0
    for utt_id, truth_seq in truth_sequences.items():
        pred_seq = mapped_pred_sequences.get(utt_id, [])
        s, d, i = _edit_ops(truth_seq, pred_seq)
        S += s
        D += d
        I += i
    return (S + D + I) / total_n, S, D, I, total_n


def boundary_prf(pred_boundaries, truth_boundaries, tolerance, utterance_lengths=None):
    """Boundary precision/recall/F with one-to-one nearest-first matching.

    Boundary sets are per utterance; when `utterance_lengths` is given,
    utterance-initial and -final positions are removed from both sides (they
    are given, not discovered). `tolerance` is a frame count, or a dict
    {utt_id: {truth_boundary: frames}} for per-boundary tolerances.
    """
    matched = n_pred = n_truth = 0
    for utt_id in set(pred_boundaries) | set(truth_boundaries):
        pred = sorted(set(pred_boundaries.get(utt_id, [])))
        truth = sorted(set(truth_boundaries.get(utt_id, [])))
        if utterance_lengths is not None:
            edges = {0, utterance_lengths[utt_id]}
            pred = [b for b in pred if b not in edges]
            truth = [b for b in truth if b not in edges]
        n_pred += len(pred)
        n_truth += len(truth)

        def tol_of(t):
            if isinstance(tolerance, dict):
                return tolerance[utt_id][t]
            return tolerance

        candidates = sorted(
            (abs(p - t), t, p)
            for p in pred
            for t in truth
            if abs(p - t) <= tol_of(t)
        )
        used_pred, used_truth = set(), set()
        for _, t, p in candidates:
            if p not in used_pred and t not in used_truth:
                used_pred.add(p)
                used_truth.add(t)
                matched += 1

    precision = matched / n_pred if n_pred else 0.0
    recall = matched / n_truth if n_truth else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f


def _phone_indices_covered(start, end, phones, overlap_frames):
    """Indices of phones covered >= 50% of their duration or >= overlap_frames."""
    covered = []
    for idx, ph in enumerate(phones):
        overlap = min(end, ph.end_frame) - max(start, ph.start_frame)
        if overlap <= 0:
            continue
        if overlap >= 0.5 * (ph.end_frame - ph.start_frame) or overlap >= overlap_frames:
            covered.append(idx)
    return covered


def map_tokens_to_phones(pred, phone_alignments, overlap_frames=3):
    """Phone-label string for every predicted token under the coverage rule.

    Returns {utt_id: [(span, cluster, phone_indices, phone_labels), ...]}.
    """
    phones_by_utt = _truth_by_utt(phone_alignments)
    mapped = {}
    for utt_id, spans in pred.items():
        phones = phones_by_utt.get(utt_id)
        if phones is None:
            raise ValueError("no phone alignments for utterance '%s'" % utt_id)
        rows = []
        for (s, e), k in spans:
            idx = _phone_indices_covered(s, e, phones, overlap_frames)
            rows.append(
                ((s, e), k, tuple(idx), tuple(phones[i].label for i in idx))
            )
        mapped[utt_id] = rows
    return mapped


def token_type_prf(pred, truth_word_alignments, truth_phone_alignments,
                   overlap_frames=3):
    """Word token and word type precision/recall/F.

    A predicted token scores iff its mapped phone sequence is exactly the
    phone sequence of a truth word token at that position; type scores
    compare the set of distinct mapped phone strings with the truth
    vocabulary.
    """
    if not truth_phone_alignments:
        raise ValueError("phone alignments are required for token/type scoring")
    phones_by_utt = _truth_by_utt(truth_phone_alignments)
    words_by_utt = _truth_by_utt(truth_word_alignments)
    mapped = map_tokens_to_phones(pred, truth_phone_alignments, overlap_frames)

    word_phone_seqs = {}  # utt -> {phone index tuple: word token id}
    truth_types = set()
    n_truth_tokens = 0
    for utt_id, words in words_by_utt.items():
        phones = phones_by_utt.get(utt_id, [])
        seqs = {}
        for w_id, w in enumerate(words):
            idx = tuple(
                _phone_indices_covered(w.start_frame, w.end_frame, phones, overlap_frames)
            )
            labels = tuple(phones[i].label for i in idx)
            seqs[idx] = (utt_id, w_id)
            truth_types.add(labels)
            n_truth_tokens += 1
        word_phone_seqs[utt_id] = seqs

    n_pred = 0
    n_credited = 0
    matched_truth = set()
    pred_types = set()
    for utt_id, rows in mapped.items():
        seqs = word_phone_seqs.get(utt_id, {})
        for _, _, idx, labels in rows:
            n_pred += 1
            pred_types.add(labels)
            hit = seqs.get(idx)
            if hit is not None:
                n_credited += 1
                matched_truth.add(hit)

    token_p = n_credited / n_pred if n_pred else 0.0
    token_r = len(matched_truth) / n_truth_tokens if n_truth_tokens else 0.0
    token_f = 2 * token_p * token_r / (token_p + token_r) if token_p + token_r else 0.0

    hits = len(pred_types & truth_types)
    type_p = hits / len(pred_types) if pred_types else 0.0
    type_r = hits / len(truth_types) if truth_types else 0.0
    type_f = 2 * type_p * type_r / (type_p + type_r) if type_p + type_r else 0.0
    return (token_p, token_r, token_f), (type_p, type_r, type_f)


def edit_distance(a, b):
    n, m = len(a), len(b)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dist[i, j] = min(
                dist[i - 1, j - 1] + (0 if a[i - 1] == b[j - 1] else 1),
                dist[i - 1, j] + 1,
                dist[i, j - 1] + 1,
            )
    return int(dist[n, m])


def ned(pred, truth_phone_alignments, overlap_frames=3):
    """Mean normalized edit distance over within-cluster token pairs.

    Each token is mapped to its phone string; every unordered pair of tokens
    sharing a cluster contributes edit_distance / max(len); singleton
    clusters contribute nothing.
    """
    mapped = map_tokens_to_phones(pred, truth_phone_alignments, overlap_frames)
    strings_by_cluster = {}
    for rows in mapped.values():
        for _, k, _, labels in rows:
            strings_by_cluster.setdefault(k, []).append(labels)

    total, n_pairs = 0.0, 0
    for strings in strings_by_cluster.values():
        for a, b in itertools.combinations(strings, 2):
            longest = max(len(a), len(b))
            total += edit_distance(a, b) / longest if longest else 0.0
            n_pairs += 1
    if n_pairs == 0:
        raise ValueError("no within-cluster pairs to evaluate")
    return total / n_pairs


def same_different_ap(items, distance="cosine"):
    """Average precision of same/different word-pair discrimination.

    `items` pairs a representation with a word label; representations are
    compared with cosine distance between vectors or per-step-normalized DTW
    cost between frame matrices. The precision-recall curve is swept over all
    distinct pairwise distances, keeping for each achievable recall the
    first (lowest-threshold) operating point; AP integrates stepwise, each
    recall increment weighted by the precision at that operating point.
    """
    if len({label for _, label in items}) < 2:
        raise ValueError("need at least 2 distinct labels")
    dists, same = [], []
    for (ra, la), (rb, lb) in itertools.combinations(items, 2):
        if distance == "cosine":
            dists.append(cosine_distance(ra, rb))
        elif distance == "dtw":
            dists.append(dtw_cost(ra, rb, metric="cosine"))
        else:
            raise ValueError("distance must be 'cosine' or 'dtw'")
        same.append(la == lb)
    dists = np.asarray(dists)
    same = np.asarray(same, dtype=bool)
    n_same = int(same.sum())
    if n_same == 0:
        raise ValueError("no same-type pairs")

    order = np.argsort(dists, kind="stable")
    ap = 0.0
    prev_recall = 0.0
    tp = fp = 0
    i = 0
    n = len(dists)
    while i < n:
        # advance over all pairs sharing this threshold value
        j = i
        while j < n and dists[order[j]] == dists[order[i]]:
            tp += int(same[order[j]])
            fp += int(not same[order[j]])
            j += 1
        recall = tp / n_same
        if recall > prev_recall:
            precision = tp / (tp + fp)
            ap += (recall - prev_recall) * precision
            prev_recall = recall
        i = j
    return ap


class EvalReport:
    """Ordered named metrics with a table and key-value serialization."""

    def __init__(self):
        self.metrics = {}

    def add(self, name, value):
        self.metrics[name] = value

    def format_table(self):
        width = max((len(n) for n in self.metrics), default=10)
        lines = ["-" * (width + 14)]
        for name, value in self.metrics.items():
            if isinstance(value, float):
                lines.append("%-*s  %10.4f" % (width, name, value))
            else:
                lines.append("%-*s  %10s" % (width, name, value))
        lines.append("-" * (width + 14))
        return "\n".join(lines)

    def save(self, path):
        with open(path, "w") as f:
            for name, value in self.metrics.items():
                f.write("%s %s\n" % (name, repr(float(value)) if isinstance(value, float) else value))


def evaluate_segmentation(pred, corpus, word_alignments, phone_alignments=None,
                          boundary_tolerance=4, overlap_frames=3,
                          gender_of_speaker=None):
    """Full metric suite for one predicted segmentation; returns an EvalReport."""
    report = EvalReport()
    truth_by_utt = _truth_by_utt(word_alignments)

    frame_map = build_mapping_matrix(pred, word_alignments, unit="frames")
    report.add("cluster_purity_frames", cluster_purity(frame_map))
    token_map = build_mapping_matrix(pred, word_alignments, unit="tokens")
    report.add("cluster_purity_tokens", cluster_purity(token_map))

    truth_seqs = {
        utt_id: [t.label for t in tokens] for utt_id, tokens in truth_by_utt.items()
    }
    for mode, tag in [("one_to_one_greedy", "wer"), ("many_to_one", "wer_m")]:
        mapping = map_clusters(frame_map, mode)
        pred_seqs = {
            utt_id: [mapping[k] for _, k in spans] for utt_id, spans in pred.items()
        }
        rate, S, D, I, N = wer(pred_seqs, truth_seqs)
        report.add(tag, rate)
        if tag == "wer":
            report.add("wer_substitutions", S)
            report.add("wer_deletions", D)
            report.add("wer_insertions", I)
            report.add("wer_truth_tokens", N)

    lengths = {u.id: u.n_frames for u in corpus}
    pred_bounds = {
        utt_id: sorted({e for (s, e), _ in spans}) for utt_id, spans in pred.items()
    }
    truth_bounds = {
        utt_id: sorted({t.end_frame for t in tokens})
        for utt_id, tokens in truth_by_utt.items()
    }
    p, r, f = boundary_prf(pred_bounds, truth_bounds, boundary_tolerance, lengths)
    report.add("boundary_precision", p)
    report.add("boundary_recall", r)
    report.add("boundary_f", f)

    spk_purity, gen_purity = speaker_gender_purity(pred, corpus, gender_of_speaker)
    report.add("speaker_purity", spk_purity)
    if gen_purity is not None:
        report.add("gender_purity", gen_purity)

    if phone_alignments:
        token_prf, type_prf = token_type_prf(
            pred, word_alignments, phone_alignments, overlap_frames
        )
        report.add("token_precision", token_prf[0])
        report.add("token_recall", token_prf[1])
        report.add("token_f", token_prf[2])
        report.add("type_precision", type_prf[0])
        report.add("type_recall", type_prf[1])
        report.add("type_f", type_prf[2])
        try:
            report.add("ned", ned(pred, phone_alignments, overlap_frames))
        except ValueError:
            logger.warning("NED skipped: no within-cluster pairs")
    return report
