"""Synthetic networks and corpora with planted ground truth.

All generators take an explicit seed and are deterministic.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .bicm import BicmFit
from .core import BipartiteGraph, DirectedBipartiteGraph, degrees_directed
from .ingest import ProfileFields, TweetRecord, default_keywords

DEGREE_FAMILIES = ("constant", "uniform", "powerlaw")


def degree_weights(family: str, n: int, rng: np.random.Generator, **params) -> np.ndarray:
    """Relative link propensities with mean 1.

    ``constant`` gives equal weights; ``uniform`` draws integers in
    ``[low, high]``; ``powerlaw`` draws integers ``k`` in ``[kmin, kmax]``
    with probability proportional to ``k ** -exponent``.
    """
    if n == 0:
        return np.zeros(0)
    if family == "constant":
        w = np.ones(n)
    elif family == "uniform":
        w = rng.integers(params.get("low", 1), params.get("high", 10) + 1, size=n).astype(float)
    elif family == "powerlaw":
        ks = np.arange(params.get("kmin", 1), params.get("kmax", 100) + 1, dtype=float)
        pk = ks ** -float(params.get("exponent", 2.5))
        w = rng.choice(ks, size=n, p=pk / pk.sum())
    else:
        raise ValueError(f"unknown degree family {family!r}; expected one of {DEGREE_FAMILIES}")
    return w / w.mean()


def sample_counts(family: str, n: int, rng: np.random.Generator, **params) -> np.ndarray:
    """Integer activity counts drawn from a degree family."""
    if family == "constant":
        return np.full(n, int(params.get("value", 1)), dtype=np.int64)
    if family == "uniform":
        return rng.integers(params.get("low", 0), params.get("high", 10) + 1, size=n).astype(np.int64)
    if family == "powerlaw":
        ks = np.arange(params.get("kmin", 1), params.get("kmax", 100) + 1)
        pk = ks.astype(float) ** -float(params.get("exponent", 2.5))
        return rng.choice(ks, size=n, p=pk / pk.sum()).astype(np.int64)
    raise ValueError(f"unknown degree family {family!r}; expected one of {DEGREE_FAMILIES}")


def sample_bicm(fit: BicmFit, seed: int) -> BipartiteGraph:
    """One graph from the BiCM ensemble: links drawn independently with ``p_ia``."""
    rng = np.random.default_rng(seed)
    rows, cols = [], []
    n = fit.x.size
    for start in range(0, n, 1024):
        P = fit.probabilities(np.arange(start, min(start + 1024, n)))
        r, c = np.nonzero(rng.random(P.shape) < P)
        rows.append(r + start)
        cols.append(c)
    left = fit.left_ids or tuple(f"L{i}" for i in range(fit.x.size))
    right = fit.right_ids or tuple(f"R{a}" for a in range(fit.y.size))
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    return BipartiteGraph(left, right, rows, cols)


@dataclass
class BlockConfig:
    """Planted verified-layer blocks.

    Unverified nodes are split across blocks in proportion to the verified
    block sizes.  A within-block link is ``inflation`` times likelier than an
    across-block one; the base rate is rescaled so the expected density
    stays ``density`` whatever the inflation.
    """

    n_left: int = 40
    n_right: int = 400
    block_sizes: Sequence[int] = (20, 20)
    inflation: float = 10.0
    density: float = 0.3
    left_family: str = "constant"
    right_family: str = "constant"
    left_params: dict = field(default_factory=dict)
    right_params: dict = field(default_factory=dict)
    seed: int = 0
    left_prefix: str = "V"
    right_prefix: str = "U"

    def __post_init__(self):
        self.block_sizes = tuple(int(b) for b in self.block_sizes)
        if self.inflation < 1:
            raise ValueError("inflation must be at least 1")
        if sum(self.block_sizes) != self.n_left:
            raise ValueError("block sizes must add up to n_left")
        if not 0 < self.density <= 1:
            raise ValueError("density must lie in (0, 1]")


def _split(n: int, sizes: Sequence[int]) -> np.ndarray:
    share = np.asarray(sizes, dtype=float) / sum(sizes)
    counts = np.floor(share * n).astype(int)
    counts[: n - counts.sum()] += 1
    return np.repeat(np.arange(len(sizes)), counts)


def plant_blocks(cfg: BlockConfig):
    """Bipartite graph with planted blocks.

    Returns the graph, the block of every L node and the block of every
    Gamma node (identifier to block index).
    """
    rng = np.random.default_rng(cfg.seed)
    lb = np.repeat(np.arange(len(cfg.block_sizes)), cfg.block_sizes)
    rb = _split(cfg.n_right, cfg.block_sizes)
    same = lb[:, None] == rb[None, :]
    s = same.mean()
    base = cfg.density / (s * cfg.inflation + (1 - s))
    wl = degree_weights(cfg.left_family, cfg.n_left, rng, **cfg.left_params)
    wr = degree_weights(cfg.right_family, cfg.n_right, rng, **cfg.right_params)
    P = np.minimum(1.0, base * np.outer(wl, wr) * np.where(same, cfg.inflation, 1.0))
    r, c = np.nonzero(rng.random(P.shape) < P)
    left = tuple(f"{cfg.left_prefix}{i:04d}" for i in range(cfg.n_left))
    right = tuple(f"{cfg.right_prefix}{a:05d}" for a in range(cfg.n_right))
    g = BipartiteGraph(left, right, r, c)
    return g, dict(zip(left, lb.tolist())), dict(zip(right, rb.tolist()))


def background_activity(n_users: int, seed: int, posts=("uniform", {"low": 1, "high": 8}),
                        retweets=("uniform", {"low": 0, "high": 20}), prefix: str = "u") -> DirectedBipartiteGraph:
    """Users authoring posts and retweeting uniformly random posts of other users."""
    rng = np.random.default_rng(seed)
    users = [f"{prefix}{k:05d}" for k in range(n_users)]
    n_posts = sample_counts(posts[0], n_users, rng, **posts[1])
    n_rts = sample_counts(retweets[0], n_users, rng, **retweets[1])
    authors = np.repeat(np.arange(n_users), n_posts)
    post_ids = [f"p{k:06d}" for k in range(authors.size)]
    t = [(users[a], post_ids[k]) for k, a in enumerate(authors)]
    r = set()
    for u in range(n_users):
        if authors.size == 0:
            break
        foreign = np.flatnonzero(authors != u)
        if foreign.size == 0:
            continue
        for k in rng.choice(foreign, size=min(n_rts[u], foreign.size), replace=False):
            r.add((users[u], post_ids[k]))
    return DirectedBipartiteGraph.from_pairs(users, post_ids, t, sorted(r))


@dataclass
class SquadTruth:
    hubs: list[str]
    bots: list[str]


def _pairs(g: DirectedBipartiteGraph):
    t = [(g.user_ids[u], g.post_ids[p]) for u, p in zip(g.t_users, g.t_posts)]
    r = [(g.user_ids[u], g.post_ids[p]) for u, p in zip(g.r_users, g.r_posts)]
    return t, r


def plant_squad(base: DirectedBipartiteGraph, n_hubs: int, n_bots: int, rate: float, seed: int,
                hubs: Sequence[str] | None = None, posts_per_hub: int | None = None,
                bot_prefix: str = "bot"):
    """Add ``n_bots`` new accounts that each retweet a fraction ``rate`` of every hub's posts.

    Hubs default to the ``n_hubs`` most prolific authors.  With
    ``posts_per_hub`` set, hubs with fewer posts get extra posts first.
    """
    if not 0 <= rate <= 1:
        raise ValueError("rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    degs = degrees_directed(base)
    if hubs is None:
        order = sorted(range(base.n_users), key=lambda k: (-degs.user_out[k], base.user_ids[k]))
        hubs = [base.user_ids[k] for k in order[:n_hubs]]
    hubs = list(hubs)
    t, r = _pairs(base)
    if rate == 0 or n_bots == 0:
        return base, SquadTruth(hubs, [])
    posts = set(base.post_ids)
    by_author: dict[str, list[str]] = {}
    for a, p in t:
        by_author.setdefault(a, []).append(p)
    for h in hubs:
        mine = sorted(by_author.get(h, []))
        k = 0
        while posts_per_hub is not None and len(mine) < posts_per_hub:
            pid = f"{h}_sq{k}"
            k += 1
            if pid in posts:
                continue
            posts.add(pid)
            mine.append(pid)
            t.append((h, pid))
        if not mine:
            raise ValueError(f"hub {h} has no posts")
        by_author[h] = mine
        if rate * len(mine) < 1:
            warnings.warn(f"hub {h}: rate x posts < 1, squad may be statistically invisible",
                          RuntimeWarning, stacklevel=2)
    existing = set(base.user_ids)
    bots = []
    k = 0
    while len(bots) < n_bots:
        name = f"{bot_prefix}{k:04d}"
        k += 1
        if name not in existing:
            bots.append(name)
    for b in bots:
        for h in hubs:
            mine = by_author[h]
            n_pick = int(round(rate * len(mine)))
            for p in rng.choice(mine, size=n_pick, replace=False):
                r.append((b, str(p)))
    users = sorted(existing | set(bots))
    return (DirectedBipartiteGraph.from_pairs(users, sorted(posts), t, r), SquadTruth(hubs, bots))


def inject_self_retweets(base: DirectedBipartiteGraph, users: Sequence[str]) -> DirectedBipartiteGraph:
    """Make each listed user retweet every post they authored."""
    t, r = _pairs(base)
    chosen = set(users)
    r = set(r) | {(a, p) for a, p in t if a in chosen}
    return DirectedBipartiteGraph.from_pairs(base.user_ids, base.post_ids, t, sorted(r))


# --------------------------------------------------------------------------
# full corpora

@dataclass
class SquadConfig:
    n_hubs: int = 22
    n_bots: int = 22
    rate: float = 0.8
    posts_per_hub: int = 30


@dataclass
class SynthConfig:
    seed: int = 42
    blocks: BlockConfig = field(default_factory=lambda: BlockConfig(n_left=40, n_right=400, block_sizes=(20, 20),
                                                                     inflation=10.0, density=0.3))
    posts_per_verified: tuple = ("uniform", {"low": 5, "high": 15})
    posts_per_unverified: tuple = ("uniform", {"low": 0, "high": 4})
    retweets_per_unverified: tuple = ("uniform", {"low": 0, "high": 6})
    same_block_retweet: float = 0.85
    squad: SquadConfig | None = field(default_factory=SquadConfig)
    n_background_bots: int = 20
    background_bot_retweets: int = 15
    self_retweeters: int = 4
    off_topic_fraction: float = 0.1
    start: float = 1_548_201_600.0   # 2019-01-23 00:00 UTC
    days: float = 30.0

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "blocks" in d:
            d["blocks"] = BlockConfig(**d["blocks"])
        if "squad" in d and d["squad"] is not None:
            d["squad"] = SquadConfig(**d["squad"])
        for k in ("posts_per_verified", "posts_per_unverified", "retweets_per_unverified"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def genuine_profile(rng, verified: bool, created: float) -> ProfileFields:
    followers = int(rng.integers(200, 5000) * (20 if verified else 1))
    return ProfileFields(
        friends_count=int(rng.integers(50, followers)),
        followers_count=followers,
        tweets_count=int(rng.integers(500, 20000)),
        account_created_at=created,
        has_name=True, has_image=True, has_address=bool(rng.random() < 0.6),
        has_biography=True, has_url=bool(rng.random() < 0.5), in_a_list=bool(rng.random() < 0.4),
        verified=verified,
    )


def bot_profile(rng, created: float) -> ProfileFields:
    return ProfileFields(
        friends_count=int(rng.integers(800, 3000)),
        followers_count=int(rng.integers(0, 30)),
        tweets_count=int(rng.integers(0, 200)),
        account_created_at=created,
        has_name=True, has_image=False, has_address=False,
        has_biography=False, has_url=False, in_a_list=False,
        verified=False,
    )


@dataclass
class CorpusTruth:
    verified_blocks: dict
    unverified_blocks: dict
    squad_hubs: list
    squad_bots: list
    bots: list
    self_retweeters: list

    def to_dict(self) -> dict:
        return asdict(self)


def generate_corpus(cfg: SynthConfig):
    """Tweet records for a synthetic discussion with planted structure.

    Verified accounts form the planted blocks; each verified/unverified link
    becomes one retweet.  Unverified users also retweet each other, mostly
    within their block.  A squad of bot accounts amplifies a set of hubs,
    a few users retweet all their own posts, and a fraction of records is
    off topic so the keyword filter has something to drop.

    Returns the records (sorted by time) and a :class:`CorpusTruth`.
    """
    rng = np.random.default_rng(cfg.seed)
    bip, vblocks, ublocks = plant_blocks(cfg.blocks)
    keywords = default_keywords()
    t0, span = cfg.start, cfg.days * 86_400.0
    created = {}
    profiles = {}

    def profile_of(uid):
        return profiles[uid]

    for uid in bip.left_ids:
        created[uid] = t0 - float(rng.uniform(200, 3000)) * 86_400.0
        profiles[uid] = genuine_profile(rng, True, created[uid])
    for uid in bip.right_ids:
        created[uid] = t0 - float(rng.uniform(30, 3000)) * 86_400.0
        profiles[uid] = genuine_profile(rng, False, created[uid])

    posts: dict[str, list[str]] = {}
    originals = []   # (tweet_id, author, time)
    counter = [0]

    def new_post(author):
        pid = f"t{counter[0]:07d}"
        counter[0] += 1
        ts = t0 + float(rng.uniform(0, span * 0.8))
        originals.append((pid, author, ts))
        posts.setdefault(author, []).append(pid)
        return pid

    for uid, n in zip(bip.left_ids, sample_counts(cfg.posts_per_verified[0], len(bip.left_ids), rng,
                                                   **cfg.posts_per_verified[1])):
        for _ in range(max(int(n), 1)):
            new_post(uid)
    for uid, n in zip(bip.right_ids, sample_counts(cfg.posts_per_unverified[0], len(bip.right_ids), rng,
                                                    **cfg.posts_per_unverified[1])):
        for _ in range(int(n)):
            new_post(uid)

    post_time = {pid: ts for pid, _, ts in originals}
    post_author = {pid: a for pid, a, _ in originals}
    retweets = set()  # (retweeter, post)
    for r, c in zip(bip.rows.tolist(), bip.cols.tolist()):
        v, u = bip.left_ids[r], bip.right_ids[c]
        retweets.add((u, str(rng.choice(posts[v]))))

    unverified = list(bip.right_ids)
    by_block: dict[int, list[str]] = {}
    for u in unverified:
        if posts.get(u):
            by_block.setdefault(ublocks[u], []).append(u)
    authors_with_posts = [u for u in unverified if posts.get(u)]
    n_rts = sample_counts(cfg.retweets_per_unverified[0], len(unverified), rng, **cfg.retweets_per_unverified[1])
    for u, n in zip(unverified, n_rts):
        for _ in range(int(n)):
            pool = by_block.get(ublocks[u], []) if rng.random() < cfg.same_block_retweet else authors_with_posts
            pool = [a for a in pool if a != u]
            if not pool:
                continue
            a = pool[int(rng.integers(len(pool)))]
            retweets.add((u, str(rng.choice(posts[a]))))

    squad_hubs, squad_bots = [], []
    if cfg.squad is not None and cfg.squad.n_bots > 0:
        sq = cfg.squad
        block0 = [v for v in bip.left_ids if vblocks[v] == 0]
        block0 += [u for u in unverified if ublocks[u] == 0]
        squad_hubs = sorted(block0[: sq.n_hubs])
        for h in squad_hubs:
            while len(posts.get(h, [])) < sq.posts_per_hub:
                pid = new_post(h)
                post_time[pid] = originals[-1][2]
                post_author[pid] = h
        for k in range(sq.n_bots):
            b = f"B{k:04d}"
            squad_bots.append(b)
            created[b] = t0 - float(rng.uniform(1, 60)) * 86_400.0
            profiles[b] = bot_profile(rng, created[b])
            for h in squad_hubs:
                mine = posts[h]
                for p in rng.choice(mine, size=int(round(sq.rate * len(mine))), replace=False):
                    retweets.add((b, str(p)))

    background_bots = []
    all_posts = sorted(post_author)
    for k in range(cfg.n_background_bots):
        b = f"N{k:04d}"
        background_bots.append(b)
        created[b] = t0 - float(rng.uniform(1, 60)) * 86_400.0
        profiles[b] = bot_profile(rng, created[b])
        for p in rng.choice(all_posts, size=min(cfg.background_bot_retweets, len(all_posts)), replace=False):
            retweets.add((b, str(p)))

    prolific = sorted((u for u in unverified if len(posts.get(u, [])) >= 3 and u not in squad_hubs),
                      key=lambda u: (-len(posts[u]), u))
    self_rt = sorted(prolific[: cfg.self_retweeters])
    for u in self_rt:
        for p in posts[u]:
            retweets.add((u, p))

    text_of = {}
    records = []
    for pid, author, ts in originals:
        kw = keywords[int(rng.integers(len(keywords)))]
        text_of[pid] = f"notizia {pid}: {kw.upper() if rng.random() < 0.3 else kw} oggi"
        records.append(TweetRecord(pid, author, text_of[pid], ts, profile_of(author)))
    for n, (u, p) in enumerate(sorted(retweets)):
        a = post_author[p]
        ts = post_time[p] + float(rng.uniform(60, span * 0.2))
        records.append(TweetRecord(f"r{n:07d}", u, f"RT @{a}: {text_of[p]}", ts, profile_of(u),
                                   retweeted_tweet_id=p, retweeted_author_id=a,
                                   retweeted_author_profile=profile_of(a)))
    n_off = int(round(cfg.off_topic_fraction * len(records)))
    pool = sorted(profiles)
    for n in range(n_off):
        u = pool[int(rng.integers(len(pool)))]
        records.append(TweetRecord(f"x{n:07d}", u, "partita di calcio stasera", t0 + float(rng.uniform(0, span)),
                                   profile_of(u)))
    records.sort(key=lambda rec: (rec.timestamp, rec.tweet_id))
    truth = CorpusTruth(vblocks, ublocks, squad_hubs, squad_bots, sorted(squad_bots + background_bots), self_rt)
    return records, truth
