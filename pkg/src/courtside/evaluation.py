"""Commentary evaluation: entity sanity checks, text metrics and the
five-criterion judge protocol.

All text metrics share one tokenizer (lowercase, whitespace split, terminal
punctuation stripped) so scores stay comparable.  The judge side builds the
fixed evaluator prompt, parses the returned scorecard and enforces the
0-20-per-criterion rubric; a deterministic mock judge exists for offline runs.
"""

from __future__ import annotations

import ast
import json
import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass

from .event_stream import RallyRecord
from .match_model import AD, advance_point, is_terminal
from .prompt_engine import GenerationRequest, GenerationResponse, PromptBundle

CRITERIA = ("accuracy", "coherence", "excitement", "professionalism", "pacing")
CRITERION_MAX = 20

ROUGE_BETA = 1.2  # recall-weighted F measure

DEFAULT_SHOT_TAXONOMY = (
    "forehand", "backhand", "serve", "volley", "smash", "slice", "lob",
    "topspin",
)


class UnparsableOutput(ValueError):
    pass


class MissingKey(ValueError):
    pass


class CriterionOutOfRange(ValueError):
    pass


class CorpusTooSmall(ValueError):
    pass


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

_PUNCT = ".,!?;:\"'`()[]{}“”‘’…"


def tokenize(text: str) -> list[str]:
    """Shared metric tokenizer: lowercase, whitespace split, strip terminal
    punctuation from each token."""
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(_PUNCT)
        if token:
            tokens.append(token)
    return tokens


def _fold(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(c for c in decomposed if not unicodedata.combining(c)).casefold()


# ---------------------------------------------------------------------------
# Text metrics
# ---------------------------------------------------------------------------


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: str, references) -> float:
    """Sentence BLEU with n = 1..4 modified precisions and brevity penalty.

    Higher-order precisions with zero matches take add-one smoothing on both
    numerator and denominator; unigram precision is never smoothed, so
    zero-overlap pairs score 0.
    """
    refs = [tokenize(r) for r in references]
    if not refs:
        raise ValueError("references must be non-empty")
    cand = tokenize(candidate)
    if not cand:
        return 0.0

    log_precision_sum = 0.0
    for n in range(1, 5):
        counts = _ngram_counts(cand, n)
        max_ref_counts: Counter = Counter()
        for ref in refs:
            for gram, k in _ngram_counts(ref, n).items():
                if k > max_ref_counts[gram]:
                    max_ref_counts[gram] = k
        matched = sum(min(k, max_ref_counts[gram]) for gram, k in counts.items())
        total = max(len(cand) - n + 1, 0)
        if matched > 0:
            precision = matched / total
        elif n == 1:
            return 0.0
        else:
            precision = (matched + 1) / (total + 1)
        log_precision_sum += 0.25 * math.log(precision)

    closest_ref = min((len(r) for r in refs),
                      key=lambda length: (abs(length - len(cand)), length))
    brevity = 1.0 if len(cand) > closest_ref else math.exp(1.0 - closest_ref / len(cand))
    return brevity * math.exp(log_precision_sum)


def _lcs(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        cur = [0]
        for j, tok_b in enumerate(b, start=1):
            if tok_a == tok_b:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str, beta: float = ROUGE_BETA) -> float:
    """Longest-common-subsequence F measure over tokens, recall-weighted."""
    cand, ref = tokenize(candidate), tokenize(reference)
    lcs = _lcs(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return (1 + beta ** 2) * precision * recall / (recall + beta ** 2 * precision)


def cider_scores(pairs) -> list[float]:
    """Per-pair CIDEr: TF-IDF n-gram cosine (n = 1..4) against each
    reference, averaged over n and references, scaled by 10.  IDF comes from
    the reference side of the whole corpus."""
    tokenized = [(tokenize(cand), [tokenize(r) for r in refs])
                 for cand, refs in pairs]
    if len(tokenized) < 2:
        raise CorpusTooSmall("CIDEr needs at least 2 pairs for corpus statistics")

    corpus_size = len(tokenized)
    doc_freq = [defaultdict(int) for _ in range(4)]
    for _, refs in tokenized:
        for n in range(4):
            seen = set()
            for ref in refs:
                seen.update(_ngram_counts(ref, n + 1))
            for gram in seen:
                doc_freq[n][gram] += 1

    def vector(tokens, n):
        counts = _ngram_counts(tokens, n + 1)
        vec = {}
        norm_sq = 0.0
        for gram, tf in counts.items():
            weight = tf * math.log(corpus_size / max(doc_freq[n][gram], 1))
            vec[gram] = weight
            norm_sq += weight * weight
        return vec, math.sqrt(norm_sq)

    scores = []
    for cand, refs in tokenized:
        per_n = []
        for n in range(4):
            cand_vec, cand_norm = vector(cand, n)
            sims = []
            for ref in refs:
                ref_vec, ref_norm = vector(ref, n)
                if cand_norm == 0.0 or ref_norm == 0.0:
                    sims.append(0.0)
                    continue
                dot = sum(w * ref_vec.get(g, 0.0) for g, w in cand_vec.items())
                sims.append(dot / (cand_norm * ref_norm))
            per_n.append(sum(sims) / len(sims))
        scores.append(10.0 * sum(per_n) / 4.0)
    return scores


def cider(pairs) -> float:
    """Corpus CIDEr: mean of the per-pair scores."""
    scores = cider_scores(pairs)
    return sum(scores) / len(scores)


@dataclass(frozen=True)
class MetricReport:
    bleu4: float
    rouge_l: float
    cider: float
    pairs_evaluated: int

    def as_dict(self) -> dict:
        return {"bleu4": self.bleu4, "rouge_l": self.rouge_l,
                "cider": self.cider, "pairs_evaluated": self.pairs_evaluated}


def corpus_metrics(pairs) -> MetricReport:
    """Mean sentence metrics over (candidate, references) pairs, fixed fold
    order for reproducible floats."""
    pairs = [(cand, list(refs)) for cand, refs in pairs]
    if len(pairs) < 2:
        raise CorpusTooSmall("corpus metrics need at least 2 pairs")
    bleu_mean = sum(bleu4(c, rs) for c, rs in pairs) / len(pairs)
    rouge_mean = sum(rouge_l(c, rs[0]) for c, rs in pairs) / len(pairs)
    return MetricReport(bleu4=bleu_mean, rouge_l=rouge_mean,
                        cider=cider(pairs), pairs_evaluated=len(pairs))


# ---------------------------------------------------------------------------
# Sanity checking against rally metadata
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SanityViolation:
    kind: str  # player_name | score_mention | shot_term
    detail: str


@dataclass(frozen=True)
class SanityReport:
    violations: tuple[SanityViolation, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.violations


_SCORE_PAIR_RE = re.compile(r"\b(0|15|30|40|ad|\d{1,2})\s*[-:]\s*(0|15|30|40|ad|\d{1,2})\b",
                            re.IGNORECASE)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")

# reason term -> who must be the actor when a sentence names exactly one player
_ATTRIBUTION_TERMS = {
    "ace": "winner",
    "double fault": "loser",
    "unforced error": "loser",
    "winner": "winner",
}


def _score_pairs_of(score) -> set[tuple[str, str]]:
    pairs = set()
    sets_won = score.sets_won()
    candidates = [
        (str(score.points[0]), str(score.points[1])),
        (str(score.games[0]), str(score.games[1])),
        (str(sets_won[0]), str(sets_won[1])),
    ]
    for a, b in candidates:
        pairs.add((a.lower(), b.lower()))
        pairs.add((b.lower(), a.lower()))
    return pairs


def sanity_check(commentary: str, rally: RallyRecord,
                 shot_taxonomy=DEFAULT_SHOT_TAXONOMY,
                 known_players=()) -> SanityReport:
    """Deterministic entity checks of a commentary against its rally.

    Flags (a) player-name problems: mentions of known non-match players, and
    single-name sentences attributing a rally-ending act to the wrong player;
    (b) score mentions inconsistent with the rally's initial or post-point
    score; (c) shot terms from the taxonomy that never occur in the rally.
    Anything the detectors cannot parse is ignored, not flagged.
    """
    violations: list[SanityViolation] = []
    info = rally.match_info
    folded_text = _fold(commentary)
    text_tokens = set(re.findall(r"[\w'-]+", folded_text))

    surname = {
        "player_1": _fold(info.player_1.surname),
        "player_2": _fold(info.player_2.surname),
    }
    match_surnames = set(surname.values())

    for name in known_players:
        candidate = _fold(name.split()[-1])
        if candidate in text_tokens and candidate not in match_surnames:
            violations.append(SanityViolation(
                "player_name", f"mentions non-match player {name!r}"))

    winner_id = rally.outcome.point_winner
    loser_id = rally.outcome.point_loser
    for sentence in _SENTENCE_SPLIT_RE.split(commentary):
        folded = _fold(sentence)
        tokens = set(re.findall(r"[\w'-]+", folded))
        named = [pid for pid, s in surname.items() if s in tokens]
        if len(named) != 1:
            continue
        for term, actor in _ATTRIBUTION_TERMS.items():
            if re.search(rf"\b{term}\b", folded):
                expected = winner_id if actor == "winner" else loser_id
                if named[0] != expected:
                    violations.append(SanityViolation(
                        "player_name",
                        f"{info.name_of(named[0])!r} named as the actor of "
                        f"{term!r}, expected {info.name_of(expected)!r}"))

    initial = rally.initial_score
    valid_pairs = _score_pairs_of(initial)
    post = None
    if is_terminal(initial) is None:
        post = advance_point(initial, winner_id)
        valid_pairs |= _score_pairs_of(post)
    for a, b in _SCORE_PAIR_RE.findall(commentary):
        if (a.lower(), b.lower()) not in valid_pairs:
            violations.append(SanityViolation(
                "score_mention", f"score {a}-{b} matches neither the initial "
                                 f"nor the post-point state"))

    states = [initial] + ([post] if post is not None else [])
    if "deuce" in text_tokens:
        if not any(s.points == ("40", "40") for s in states):
            violations.append(SanityViolation(
                "score_mention", "mentions deuce but the game is not at 40-40"))
    if "advantage" in text_tokens:
        if not any(AD in s.points for s in states):
            violations.append(SanityViolation(
                "score_mention", "mentions advantage but nobody holds AD"))

    seen_terms = set()
    for shot in rally.shots:
        seen_terms.add(shot.stroke)
        seen_terms.add(shot.technique)
    for term in shot_taxonomy:
        if re.search(rf"\b{re.escape(_fold(term))}\b", folded_text):
            if term not in seen_terms:
                violations.append(SanityViolation(
                    "shot_term", f"mentions {term!r} which never occurs in "
                                 f"the rally"))

    return SanityReport(tuple(violations))


# ---------------------------------------------------------------------------
# Judge protocol
# ---------------------------------------------------------------------------

JUDGE_SYSTEM_PROMPT = (
    "You are a senior Tennis Analyst and expert commentator evaluator. Your "
    "task is to evaluate a **Generated Commentary** against strict **Match "
    "Metadata** and a **Reference Commentary** (Ground Truth)."
)

JUDGE_USER_TEMPLATE = """\
### INPUT DATA:
1. **METADATA (Ground Truth):** {metadata}
2. **REFERENCE COMMENTARY (Style/Tone Baseline):** "{reference}"
3. **PREDICTION (Target to Evaluate):** "{prediction}"

### SCORING RUBRIC (0-20 points per category, Total 100):
1. **ACCURACY (0-20 pts):** Alignment with METADATA (players, shot types, score, court positions).
   - 20: Perfect factual match.
   - 0: Hallucinations (wrong player, wrong shot) or contradictions with Metadata.
2. **COHERENCE (0-20 pts):** Logical flow and pronoun usage.
   - 20: Natural narrative; events connect logically.
   - 0: Confusing structure; contradictions within the text.
3. **EXCITEMENT (0-20 pts):** Tone matches the event intensity.
   - 20: Highly engaging; emotive vocabulary fitting the moment.
   - 0: Robotic, flat, or mismatched tone (e.g., boring description of a winner).
4. **PROFESSIONALISM (0-20 pts):** Domain terminology and depth of analysis.
   - 20: Insightful observation (e.g., noting "inside-out forehand" or "tactical adjustment").
   - 0: Superficial or generic description only.
5. **PACING (0-20 pts):** Length relative to event complexity.
   - 20: Concise for quick points; descriptive for long rallies.
   - 0: Severe mismatch (e.g., long paragraph for a simple double fault).

### OUTPUT INSTRUCTION:
Provide your evaluation **strictly** as a Python dictionary string (JSON compatible).
Do NOT output any markdown or conversational text.
The dictionary must have the following keys:
{{
    "scores": {{
        "accuracy": <int>,
        "coherence": <int>,
        "excitement": <int>,
        "professionalism": <int>,
        "pacing": <int>
    }},
    "total_score": <int>
}}"""


@dataclass(frozen=True)
class JudgeScorecard:
    accuracy: int
    coherence: int
    excitement: int
    professionalism: int
    pacing: int
    total: int
    corrected: bool = False

    def __post_init__(self):
        for name in CRITERIA:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise CriterionOutOfRange(f"{name} must be an integer")
            if not 0 <= value <= CRITERION_MAX:
                raise CriterionOutOfRange(
                    f"{name}={value} outside [0, {CRITERION_MAX}]")
        if self.total != sum(getattr(self, c) for c in CRITERIA):
            raise ValueError("total must equal the sum of the five criteria")

    def as_dict(self) -> dict:
        out = {c: getattr(self, c) for c in CRITERIA}
        out["total"] = self.total
        out["corrected"] = self.corrected
        return out


def build_judge_prompt(metadata: str, reference: str,
                       prediction: str) -> PromptBundle:
    """Fill the evaluator templates with the three inputs, verbatim."""
    if not (metadata and reference and prediction):
        raise ValueError("metadata, reference and prediction must be non-empty")
    user = JUDGE_USER_TEMPLATE.format(metadata=metadata, reference=reference,
                                      prediction=prediction)
    return PromptBundle(system_text=JUDGE_SYSTEM_PROMPT, user_text=user)


def _candidate_payloads(text: str):
    yield text
    # judge models occasionally wrap the dictionary in prose or fences
    fenced = re.sub(r"^```(?:json|python)?|```$", "", text.strip(),
                    flags=re.MULTILINE).strip()
    if fenced != text:
        yield fenced
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        yield text[start:end + 1]


def _loads_loose(payload: str) -> dict:
    try:
        return json.loads(payload)
    except ValueError:
        pass
    try:
        value = ast.literal_eval(payload)
    except (ValueError, SyntaxError):
        raise UnparsableOutput("not a JSON-compatible dictionary") from None
    if not isinstance(value, dict):
        raise UnparsableOutput("parsed value is not a dictionary")
    return value


def parse_scorecard(judge_output: str) -> JudgeScorecard:
    """Extract and validate a five-criterion scorecard from judge text.

    Accepts the nested ``{"scores": {...}, "total_score": n}`` shape and the
    flat variant.  Criterion values are hard bounds, never clamped; a total
    that disagrees with the criterion sum is recomputed and flagged.
    """
    obj = None
    last_error: Exception | None = None
    for payload in _candidate_payloads(judge_output):
        try:
            parsed = _loads_loose(payload)
        except UnparsableOutput as exc:
            last_error = exc
            continue
        if isinstance(parsed, dict):
            obj = parsed
            break
    if obj is None:
        raise UnparsableOutput(str(last_error) if last_error else "no dictionary found")

    source = obj.get("scores") if isinstance(obj.get("scores"), dict) else obj
    values = {}
    for name in CRITERIA:
        if name not in source:
            raise MissingKey(f"missing criterion {name!r}")
        value = source[name]
        if not isinstance(value, int) or isinstance(value, bool):
            raise CriterionOutOfRange(f"{name} must be an integer, got {value!r}")
        if not 0 <= value <= CRITERION_MAX:
            raise CriterionOutOfRange(f"{name}={value} outside [0, {CRITERION_MAX}]")
        values[name] = value

    total = obj.get("total_score", obj.get("total"))
    if total is None:
        raise MissingKey("missing total_score")
    expected = sum(values.values())
    corrected = total != expected
    return JudgeScorecard(total=expected, corrected=corrected, **values)


def render_scorecard(card: JudgeScorecard) -> str:
    """The judge output format for a scorecard, nested shape."""
    return json.dumps({
        "scores": {c: getattr(card, c) for c in CRITERIA},
        "total_score": card.total,
    }, indent=4)


class MockJudgeClient:
    """Deterministic judge stand-in: scores surface overlap between the
    prediction and the reference pulled back out of the prompt."""

    name = "mock-judge"
    token_cap = None

    _REFERENCE_RE = re.compile(
        r'\*\*REFERENCE COMMENTARY \(Style/Tone Baseline\):\*\* "(.*?)"\n3\.',
        re.DOTALL)
    _PREDICTION_RE = re.compile(
        r'\*\*PREDICTION \(Target to Evaluate\):\*\* "(.*?)"\n\n### SCORING',
        re.DOTALL)

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        user = request.bundle.user_text
        ref_match = self._REFERENCE_RE.search(user)
        pred_match = self._PREDICTION_RE.search(user)
        if not (ref_match and pred_match):
            raise UnparsableOutput("judge prompt missing reference/prediction slots")
        reference, prediction = ref_match.group(1), pred_match.group(1)

        overlap = rouge_l(prediction, reference)
        accuracy = round(overlap * CRITERION_MAX)
        coherence = min(CRITERION_MAX, 10 + len(tokenize(prediction)) // 8)
        excitement = 12 if any(c in prediction for c in "!—") else 10
        professionalism = min(CRITERION_MAX,
                              6 + 2 * sum(1 for t in DEFAULT_SHOT_TAXONOMY
                                          if re.search(rf"\b{t}\b", prediction.lower())))
        word_count = len(prediction.split())
        pacing = CRITERION_MAX - min(CRITERION_MAX, abs(word_count - 25) // 2)
        scores = {
            "accuracy": accuracy, "coherence": coherence,
            "excitement": excitement, "professionalism": professionalism,
            "pacing": pacing,
        }
        text = json.dumps({"scores": scores, "total_score": sum(scores.values())})
        return GenerationResponse(text=text, usage={})


# ---------------------------------------------------------------------------
# Corpus aggregation
# ---------------------------------------------------------------------------


def aggregate(scorecards, metric_report: MetricReport | None = None,
              sanity_reports=None) -> dict:
    """Corpus summary: per-criterion means, metric means and sanity pass rate."""
    scorecards = list(scorecards)
    if not scorecards and metric_report is None and not sanity_reports:
        raise ValueError("nothing to aggregate")
    summary: dict = {}
    if scorecards:
        block = {"count": len(scorecards)}
        for name in CRITERIA + ("total",):
            block[f"{name}_mean"] = (
                sum(getattr(c, name) for c in scorecards) / len(scorecards))
        summary["judge"] = block
    if metric_report is not None:
        summary["metrics"] = metric_report.as_dict()
    if sanity_reports is not None:
        reports = list(sanity_reports)
        if reports:
            summary["sanity"] = {
                "count": len(reports),
                "pass_rate": sum(1 for r in reports if r.passed) / len(reports),
            }
    return summary
