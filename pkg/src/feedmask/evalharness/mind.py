"""MIND-format dataset loading and click-frequency user bucketing.

Expected layout: a directory holding tab-separated ``news.tsv``
(id, category, subcategory, title, abstract, ...) and ``behaviors.tsv``
(impressionId, userId, time, history, impressions), where the impressions
column is a space-separated list of ``itemId-1`` (clicked) / ``itemId-0``
(ignored) tokens.  A 100-impression fixture ships with the package.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from feedmask.errors import DanglingItemRefError, MissingFileError
from feedmask.pipeline import Impression, Item

logger = logging.getLogger(__name__)

NEWS_FILE = "news.tsv"
BEHAVIORS_FILE = "behaviors.tsv"

# click-count intervals: [0,10), [10,20), ... [90,100), [100, inf)
BUCKET_EDGES: list[tuple[int, int | None]] = [
    *((lo, lo + 10) for lo in range(0, 100, 10)),
    (100, None),
]
DEFAULT_QUOTA = 10_000

_TIME_FORMAT = "%m/%d/%Y %I:%M:%S %p"


def fixture_dir() -> Path:
    """Directory of the bundled 100-impression sample."""
    return Path(__file__).parent / "fixtures"


def bucket_label(lower: int, upper: int | None) -> str:
    return f"[{lower}, {upper})" if upper is not None else f"[{lower}, inf)"


def bucket_index(clicks: int) -> int:
    if clicks < 0:
        raise ValueError("click count is negative")
    return min(clicks // 10, len(BUCKET_EDGES) - 1)


def _time_key(impression: Impression):
    try:
        return datetime.strptime(impression.timestamp, _TIME_FORMAT)
    except ValueError:
        return datetime.min


@dataclass
class MindDataset:
    news: dict[str, Item]
    behaviors: list[Impression]

    def user_ids(self) -> list[str]:
        seen: set[str] = set()
        ordered = []
        for impression in self.behaviors:
            if impression.user_id not in seen:
                seen.add(impression.user_id)
                ordered.append(impression.user_id)
        return ordered

    def user_impressions(self, user_id: str) -> list[Impression]:
        rows = [imp for imp in self.behaviors if imp.user_id == user_id]
        return sorted(rows, key=_time_key)  # stable: unparsable times keep file order

    def click_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for impression in self.behaviors:
            clicks = sum(1 for _, clicked in impression.displayed if clicked)
            counts[impression.user_id] = counts.get(impression.user_id, 0) + clicks
        return counts


def load_mind(directory) -> MindDataset:
    root = Path(directory)
    news_path = root / NEWS_FILE
    behaviors_path = root / BEHAVIORS_FILE
    for path in (news_path, behaviors_path):
        if not path.is_file():
            raise MissingFileError(str(path))

    news: dict[str, Item] = {}
    for lineno, line in enumerate(_rows(news_path), start=1):
        cols = line.split("\t")
        if len(cols) < 4:
            raise ValueError(f"{NEWS_FILE} row {lineno}: expected at least 4 columns")
        news[cols[0]] = Item(
            id=cols[0],
            title=cols[3],
            summary=cols[4] if len(cols) > 4 else "",
            category=cols[1],
            raw={"subcategory": cols[2]},
        )

    behaviors: list[Impression] = []
    dangling: set[str] = set()
    for lineno, line in enumerate(_rows(behaviors_path), start=1):
        cols = line.split("\t")
        while len(cols) < 5:
            cols.append("")
        impression_id, user_id, time_col, _history, tokens = cols[:5]
        tokens = tokens.strip()
        if not tokens:
            logger.warning(
                "%s row %d (%s): empty impressions column, row skipped",
                BEHAVIORS_FILE, lineno, impression_id,
            )
            continue
        displayed: list[tuple[Item, bool]] = []
        missing_here = False
        for token in tokens.split():
            item_id, sep, label = token.rpartition("-")
            if not sep or label not in ("0", "1"):
                raise ValueError(f"{BEHAVIORS_FILE} row {lineno}: bad token {token!r}")
            item = news.get(item_id)
            if item is None:
                dangling.add(item_id)
                missing_here = True
                continue
            displayed.append((item, label == "1"))
        if missing_here:
            continue  # the load fails below; do not build a partial impression
        behaviors.append(
            Impression(
                impression_id=impression_id,
                user_id=user_id,
                timestamp=time_col,
                displayed=displayed,
            )
        )
    if dangling:
        raise DanglingItemRefError(sorted(dangling))
    return MindDataset(news=news, behaviors=behaviors)


def _rows(path: Path):
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            yield line


@dataclass
class Cohort:
    lower: int
    upper: int | None
    users: list[str]
    clicks: int
    shortfall: bool
    population: int

    @property
    def label(self) -> str:
        return bucket_label(self.lower, self.upper)


def bucket_users(dataset: MindDataset, quota: int = DEFAULT_QUOTA, rng=None) -> list[Cohort]:
    """Group users by click count, then draw per bucket until the click quota.

    Draw order is a seeded permutation; a bucket that runs out of users
    before reaching the quota takes them all and flags the shortfall.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    counts = dataset.click_counts()
    members: list[list[str]] = [[] for _ in BUCKET_EDGES]
    for user_id in dataset.user_ids():
        members[bucket_index(counts[user_id])].append(user_id)

    cohorts = []
    for (lower, upper), bucket in zip(BUCKET_EDGES, members):
        order = [bucket[int(i)] for i in rng.permutation(len(bucket))] if bucket else []
        chosen: list[str] = []
        total = 0
        for user_id in order:
            if total >= quota:
                break
            chosen.append(user_id)
            total += counts[user_id]
        cohorts.append(
            Cohort(
                lower=lower,
                upper=upper,
                users=chosen,
                clicks=total,
                shortfall=total < quota,
                population=len(bucket),
            )
        )
    return cohorts
