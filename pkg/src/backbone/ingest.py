"""Tweet-record ingestion.

Records are read from line-delimited JSON, one tweet per line, filtered by
topic keywords and turned into the account table, the verified/unverified
interaction graph and the users x posts graph.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, fields
from importlib import resources
from typing import Iterable, Iterator, Mapping

from .core import BipartiteGraph, DirectedBipartiteGraph

logger = logging.getLogger(__name__)


class RecordError(ValueError):
    """A tweet record is malformed."""


@dataclass(frozen=True)
class ProfileFields:
    friends_count: int = 0
    followers_count: int = 0
    tweets_count: int = 0
    account_created_at: float = 0.0
    has_name: bool = False
    has_image: bool = False
    has_address: bool = False
    has_biography: bool = False
    has_url: bool = False
    in_a_list: bool = False
    verified: bool | None = None

    def __post_init__(self):
        for name in ("friends_count", "followers_count", "tweets_count"):
            if getattr(self, name) < 0:
                raise RecordError(f"{name} must be nonnegative")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProfileFields":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for k, v in d.items():
            if k not in known:
                continue
            if k.endswith("_count"):
                v = int(v)
            elif k == "account_created_at":
                v = float(v)
            elif v is not None:
                v = bool(v)
            kwargs[k] = v
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PROFILE_COLUMNS = tuple(f.name for f in fields(ProfileFields) if f.name != "verified")


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    author_id: str
    text: str
    timestamp: float
    author_profile: ProfileFields
    retweeted_tweet_id: str | None = None
    retweeted_author_id: str | None = None
    # optional: profile of the retweeted author, as embedded by most collectors
    retweeted_author_profile: ProfileFields | None = None

    def __post_init__(self):
        if not self.tweet_id:
            raise RecordError("tweet_id must be nonempty")
        if (self.retweeted_tweet_id is None) != (self.retweeted_author_id is None):
            raise RecordError(f"record {self.tweet_id}: retweeted_tweet_id and retweeted_author_id "
                              "must be both present or both absent")
        if self.author_profile.account_created_at > self.timestamp:
            raise RecordError(f"record {self.tweet_id}: author account created after the record")

    @property
    def is_retweet(self) -> bool:
        return self.retweeted_tweet_id is not None

    @classmethod
    def from_dict(cls, d: Mapping, mapping: Mapping[str, str] | None = None) -> "TweetRecord":
        if mapping:
            d = {mapping.get(k, k): v for k, v in d.items()}
        try:
            prof = d.get("author_profile") or {}
            if mapping:
                prof = {mapping.get(k, k): v for k, v in prof.items()}
            rt_prof = d.get("retweeted_author_profile")
            if rt_prof is not None and mapping:
                rt_prof = {mapping.get(k, k): v for k, v in rt_prof.items()}
            rt_id = d.get("retweeted_tweet_id")
            rt_author = d.get("retweeted_author_id")
            return cls(
                tweet_id=str(d["tweet_id"]),
                author_id=str(d["author_id"]),
                text=str(d.get("text", "")),
                timestamp=float(d["timestamp"]),
                author_profile=ProfileFields.from_dict(prof),
                retweeted_tweet_id=None if rt_id is None else str(rt_id),
                retweeted_author_id=None if rt_author is None else str(rt_author),
                retweeted_author_profile=None if rt_prof is None else ProfileFields.from_dict(rt_prof),
            )
        except KeyError as exc:
            raise RecordError(f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise RecordError(str(exc)) from None

    def to_dict(self) -> dict:
        d = {
            "tweet_id": self.tweet_id,
            "author_id": self.author_id,
            "text": self.text,
            "timestamp": self.timestamp,
            "author_profile": self.author_profile.to_dict(),
            "retweeted_tweet_id": self.retweeted_tweet_id,
            "retweeted_author_id": self.retweeted_author_id,
        }
        if self.retweeted_author_profile is not None:
            d["retweeted_author_profile"] = self.retweeted_author_profile.to_dict()
        return d


@dataclass
class AccountRecord:
    user_id: str
    profile: ProfileFields | None
    verified: bool | None
    bot: bool | None = None
    community: object | None = None
    polarization: float | None = None

    def __post_init__(self):
        if self.polarization is not None and not 0.0 <= self.polarization <= 1.0:
            raise ValueError("polarization must lie in [0, 1]")


@dataclass
class Diagnostics:
    messages: list[str] = field(default_factory=list)

    def add(self, msg: str) -> None:
        logger.debug(msg)
        self.messages.append(msg)

    def __len__(self):
        return len(self.messages)


# --------------------------------------------------------------------------
# reading and filtering

def load_mapping(path) -> dict[str, str]:
    """Field-renaming config: ``{"fields": {"source_name": "target_name", ...}}``."""
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    return dict(cfg.get("fields", cfg))


def read_records(path, mapping: Mapping[str, str] | None = None,
                 diagnostics: Diagnostics | None = None) -> Iterator[TweetRecord]:
    """Stream records from a ``.jsonl`` file, skipping malformed lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield TweetRecord.from_dict(json.loads(line), mapping)
            except (json.JSONDecodeError, RecordError) as exc:
                if diagnostics is not None:
                    diagnostics.add(f"{path}:{lineno}: skipped ({exc})")


def write_records(records: Iterable[TweetRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def default_keywords() -> list[str]:
    return load_keywords(resources.files("backbone").joinpath("data/keywords.txt"))


def load_keywords(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def keyword_filter(records: Iterable[TweetRecord], keywords: Iterable[str]) -> Iterator[TweetRecord]:
    """Keep records whose text contains any keyword, ignoring case.

    Matching is plain substring search after case folding, so multi-word
    keywords must appear contiguously.
    """
    folded = [k.casefold() for k in keywords if k]
    if not folded:
        raise ValueError("keyword list is empty")
    for rec in records:
        text = rec.text.casefold()
        if any(k in text for k in folded):
            yield rec


# --------------------------------------------------------------------------
# tables and graphs

def build_accounts(records: Iterable[TweetRecord]) -> dict[str, AccountRecord]:
    """Account table over every author and retweeted author.

    An author's profile is taken from their latest record.  Accounts seen
    only as retweeted authors use the embedded retweeted-author profile when
    the stream carries one, and are stubs without a profile otherwise.
    """
    own: dict[str, tuple[float, ProfileFields]] = {}
    embedded: dict[str, tuple[float, ProfileFields | None]] = {}
    for rec in records:
        prev = own.get(rec.author_id)
        if prev is None or rec.timestamp >= prev[0]:
            own[rec.author_id] = (rec.timestamp, rec.author_profile)
        if rec.retweeted_author_id is not None:
            prev = embedded.get(rec.retweeted_author_id)
            if prev is None or (rec.retweeted_author_profile is not None and rec.timestamp >= prev[0]):
                embedded[rec.retweeted_author_id] = (rec.timestamp, rec.retweeted_author_profile)
    accounts = {}
    for uid in sorted(set(own) | set(embedded)):
        prof = own[uid][1] if uid in own else embedded[uid][1]
        accounts[uid] = AccountRecord(uid, prof, None if prof is None else prof.verified)
    return accounts


def corpus_end(records: Iterable[TweetRecord]) -> float:
    """Timestamp of the last record; feature ages are measured against it."""
    return max((r.timestamp for r in records), default=0.0)


def build_interaction_bipartite(records: Iterable[TweetRecord],
                                accounts: Mapping[str, AccountRecord] | None = None,
                                diagnostics: Diagnostics | None = None) -> BipartiteGraph:
    """Undirected verified (layer L) x unverified (layer Gamma) interaction graph.

    Any record linking two accounts counts as an interaction; direction and
    multiplicity are discarded.  Records whose author lacks a verified flag
    are rejected with a diagnostic.
    """
    records = list(records)
    accounts = build_accounts(records) if accounts is None else accounts
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    verified = sorted(u for u, a in accounts.items() if a.verified is True)
    unverified = sorted(u for u, a in accounts.items() if a.verified is False)
    pairs = []
    for rec in records:
        if rec.author_profile.verified is None:
            diagnostics.add(f"record {rec.tweet_id}: author {rec.author_id} lacks the verified flag")
            continue
        if not rec.is_retweet or rec.retweeted_author_id == rec.author_id:
            continue
        other = accounts.get(rec.retweeted_author_id)
        if other is None or other.verified is None:
            diagnostics.add(f"record {rec.tweet_id}: verified status of {rec.retweeted_author_id} unknown")
            continue
        a_ver = accounts[rec.author_id].verified if rec.author_id in accounts else rec.author_profile.verified
        if a_ver is None:
            a_ver = rec.author_profile.verified
        if a_ver == other.verified:
            continue
        pairs.append((rec.author_id, rec.retweeted_author_id) if a_ver else (rec.retweeted_author_id, rec.author_id))
    return BipartiteGraph.from_pairs(verified, unverified, pairs)


def build_user_post_bipartite(records: Iterable[TweetRecord],
                              diagnostics: Diagnostics | None = None) -> DirectedBipartiteGraph:
    """Users x posts graph: authorship links T and retweet links R.

    Retweets of posts missing from the corpus create a stub post authored by
    the retweeted author.  Conflicting authorship claims keep the original
    record's author.
    """
    records = list(records)
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    author: dict[str, str] = {}
    for rec in records:
        if not rec.is_retweet:
            if rec.tweet_id in author and author[rec.tweet_id] != rec.author_id:
                diagnostics.add(f"post {rec.tweet_id}: conflicting authors, keeping {author[rec.tweet_id]}")
                continue
            author[rec.tweet_id] = rec.author_id
    retweets = []
    for rec in records:
        if not rec.is_retweet:
            continue
        post = rec.retweeted_tweet_id
        if post not in author:
            author[post] = rec.retweeted_author_id
        elif author[post] != rec.retweeted_author_id:
            diagnostics.add(f"retweet {rec.tweet_id}: post {post} attributed to {rec.retweeted_author_id}, "
                            f"keeping {author[post]}")
        retweets.append((rec.author_id, post))
    users = sorted({r.author_id for r in records} | {r.retweeted_author_id for r in records if r.is_retweet})
    posts = sorted(author)
    return DirectedBipartiteGraph.from_pairs(users, posts, sorted((a, p) for p, a in author.items()), retweets)


def interaction_edges(records: Iterable[TweetRecord]) -> set[tuple[str, str]]:
    """Undirected author/retweeted-author pairs among all users, self-pairs excluded."""
    out = set()
    for rec in records:
        if rec.is_retweet and rec.retweeted_author_id != rec.author_id:
            a, b = sorted((rec.author_id, rec.retweeted_author_id))
            out.add((a, b))
    return out


# --------------------------------------------------------------------------
# account table persistence

ACCOUNT_COLUMNS = ("user_id", "verified", "has_profile") + PROFILE_COLUMNS + ("as_of",)


def _fmt_bool(v):
    return "" if v is None else ("1" if v else "0")


def write_accounts_csv(accounts: Mapping[str, AccountRecord], path, as_of: float) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ACCOUNT_COLUMNS)
        for uid in sorted(accounts):
            acc = accounts[uid]
            row = [uid, _fmt_bool(acc.verified), _fmt_bool(acc.profile is not None)]
            if acc.profile is None:
                row += [""] * len(PROFILE_COLUMNS)
            else:
                for col in PROFILE_COLUMNS:
                    v = getattr(acc.profile, col)
                    row.append(_fmt_bool(v) if isinstance(v, bool) else repr(v) if isinstance(v, float) else v)
            row.append(repr(float(as_of)))
            w.writerow(row)


def read_accounts_csv(path) -> tuple[dict[str, AccountRecord], float]:
    """Inverse of :func:`write_accounts_csv`; returns the table and its ``as_of`` time."""
    accounts = {}
    as_of = 0.0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"user_id", "verified"} - set(reader.fieldnames or ())
        if missing:
            raise RecordError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            verified = None if row["verified"] == "" else row["verified"] == "1"
            prof = None
            if row.get("has_profile") == "1":
                vals = {c: row[c] for c in PROFILE_COLUMNS if row.get(c, "") != ""}
                for c in list(vals):
                    if c.startswith("has_") or c == "in_a_list":
                        vals[c] = vals[c] == "1"
                vals["verified"] = verified
                prof = ProfileFields.from_dict(vals)
            accounts[row["user_id"]] = AccountRecord(row["user_id"], prof, verified)
            if row.get("as_of"):
                as_of = max(as_of, float(row["as_of"]))
    return accounts, as_of
