"""Synthetic recoverable corpus for offline experiments and acceptance runs.

Each exemplar is drawn from a latent (task, style) pair. The code text
depends only on the task: instances of one task share a template and differ
only in string and number literals, so their sketches are identical. The
utterance wraps a short task phrase in a much longer style wrapper, so raw
character-trigram similarity is dominated by style while code similarity is
determined by task. Boundary curation on this corpus therefore has real
signal: embedding-nearest candidates are style matches, not task matches.
"""

from __future__ import annotations

import random

from .corpus import Corpus, Exemplar
from .errors import DataError

MIN_SIZE = 20
MIN_TASK_MEMBERS = 4

# (task phrase, code template); {w} is a random word, {num} a random integer.
TASKS = (
    ("filter rows where {w} exceeds {num}",
     'rows = table.filter(col("{w}") > {num})'),
    ("sum the {w} column in batches of {num}",
     'total = table.column("{w}").chunks({num}).sum()'),
    ("sort records by {w} keeping top {num}",
     'out = table.sort_by("{w}").head({num})'),
    ("count distinct {w} values above {num}",
     'n = table.where(col("{w}") >= {num}).distinct().count()'),
    ("rename the {w} field to legacy{num}",
     'table = table.rename("{w}", "legacy{num}")'),
    ("average {w} over the last {num} days",
     'avg = table.tail({num}).column("{w}").mean()'),
    ("drop rows missing {w} beyond {num} gaps",
     'table = table.drop_null("{w}", limit={num})'),
    ("join orders on {w} with buffer {num}",
     'merged = table.join(orders, on="{w}", tolerance={num})'),
    ("pivot months into {w} cells wide {num}",
     'wide = table.pivot(index="{w}", width={num})'),
    ("split {w} text at position {num}",
     'parts = table.column("{w}").split_at({num})'),
    ("round {w} figures to {num} decimals",
     'table = table.apply("{w}", round_to({num}))'),
    ("flag {w} outliers past {num} sigma",
     'flags = table.column("{w}").zscore().above({num})'),
    ("sample {num} rows stratified by {w}",
     'subset = table.stratify("{w}").sample({num})'),
    ("merge duplicate {w} entries within {num}",
     'table = table.dedupe("{w}", window={num})'),
    ("export the {w} slice as csv chunk {num}",
     'table.select("{w}").to_csv(part={num})'),
    ("backfill {w} gaps using {num} neighbors",
     'table = table.interpolate("{w}", k={num})'),
    ("rank suppliers by {w} within {num} tiers",
     'ranks = table.rank("{w}", buckets={num})'),
    ("mask the {w} column after {num} chars",
     'table = table.redact("{w}", keep={num})'),
    ("diff weekly {w} totals against {num}",
     'delta = table.rollup("{w}", weeks={num}).diff()'),
    ("cap {w} readings at ceiling {num}",
     'table = table.clip("{w}", upper={num})'),
)

# Long surface wrappers around the task phrase; {core} is the phrase slot.
STYLES = (
    "hey, whenever you have a sec could you please {core}? thanks a bunch, no rush at all on this",
    "URGENT request from the finance team standup: {core} -- needed before the end of day reporting run",
    "i was poking around the dashboard earlier and wondered, would it be possible to {core} somehow?",
    "per our conversation yesterday afternoon, the next step here is to {core} before we sync again",
    "greetings! as discussed in the quarterly planning review, kindly {core} at your earliest convenience",
    "quick one for the data crew... can somebody {core}?? the analysts keep pinging me about it",
)

TRAIN_STYLES = (0, 1, 2, 3)
TEST_STYLES = (2, 3, 4, 5)

UNIQUENESS_ATTEMPTS = 50


def task_count(n: int) -> int:
    """Enough tasks that each has roughly ten members: large enough for
    boundary curation per anchor, small enough that every task keeps at
    least four members in each split region."""
    return max(3, min(len(TASKS), n // 10))


def _random_word(rng: random.Random) -> str:
    return "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(rng.randint(4, 8)))


def synth_corpus(n: int, seed: int) -> Corpus:
    """Deterministic synthetic corpus of n exemplars.

    Task index cycles with position; the split pattern rotates across tasks
    so every task appears in both splits (roughly a quarter of each task's
    members are test). Test utterances draw from a style window shifted past
    the train window, so two styles are test-only.
    """
    if n < MIN_SIZE:
        raise DataError(f"synthetic corpus needs n >= {MIN_SIZE}, got {n}")
    rng = random.Random(seed)
    n_tasks = task_count(n)
    seen_utterances: set[str] = set()
    exemplars = []
    for i in range(n):
        task = i % n_tasks
        is_test = (task + i // n_tasks) % 4 == 0
        styles = TEST_STYLES if is_test else TRAIN_STYLES
        style = styles[rng.randrange(len(styles))]
        phrase_tpl, code_tpl = TASKS[task]
        for attempt in range(UNIQUENESS_ATTEMPTS):
            word = _random_word(rng)
            number = rng.randint(1, 999)
            core = phrase_tpl.format(w=word, num=number)
            utterance = STYLES[style].format(core=core)
            if utterance not in seen_utterances:
                break
        else:
            raise DataError(f"could not draw a unique utterance for exemplar {i}")
        seen_utterances.add(utterance)
        exemplars.append(
            Exemplar(
                id=f"syn-{i:04d}",
                utterance=utterance,
                code=code_tpl.format(w=word, num=number),
                split="test" if is_test else "train",
            )
        )
    return Corpus(exemplars=tuple(exemplars), source=f"synth(n={n}, seed={seed})")
