"""Profile-based bot classification.

Accounts are described by sixteen profile features and labelled by a binary
decision tree loaded from JSON.  Boolean features compare as 0/1 and a
value goes to the left child when ``value <= threshold``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from typing import Mapping

from .ingest import AccountRecord, ProfileFields

BOT = "bot"
GENUINE = "genuine"
UNKNOWN = "unknown"
SECONDS_PER_DAY = 86_400.0


class ModelError(ValueError):
    """Invalid tree model."""


@dataclass(frozen=True)
class FeatureVector:
    friends: int
    followers: int
    tweets: int
    friends_over_followers_sq: float
    account_age_days: float
    following_rate: float
    has_name: bool
    has_image: bool
    has_address: bool
    has_bio: bool
    has_url: bool
    in_list: bool
    rule_2f_ge_fr: bool
    rule_100fr_ge_f: bool
    rule_50fr_ge_f: bool

    def value(self, name: str) -> float:
        v = getattr(self, name)
        return float(v)


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))


def extract_features(profile: ProfileFields, as_of: float) -> FeatureVector:
    """Feature vector of an account observed at time ``as_of`` (UTC seconds).

    ``friends / followers**2`` is 0 when both counts are 0 and ``+inf`` when
    only followers is 0.  The following rate divides by an age floored at one
    day.
    """
    if as_of < profile.account_created_at:
        raise ValueError("observation time precedes account creation")
    fr, fo = profile.friends_count, profile.followers_count
    if fo > 0:
        ratio = fr / fo**2
    else:
        ratio = math.inf if fr > 0 else 0.0
    age = (as_of - profile.account_created_at) / SECONDS_PER_DAY
    return FeatureVector(
        friends=fr,
        followers=fo,
        tweets=profile.tweets_count,
        friends_over_followers_sq=ratio,
        account_age_days=age,
        following_rate=fr / max(age, 1.0),
        has_name=profile.has_name,
        has_image=profile.has_image,
        has_address=profile.has_address,
        has_bio=profile.has_biography,
        has_url=profile.has_url,
        in_list=profile.in_a_list,
        rule_2f_ge_fr=2 * fo >= fr,
        rule_100fr_ge_f=100 * fr >= fo,
        rule_50fr_ge_f=50 * fr >= fo,
    )


@dataclass(frozen=True)
class TreeNode:
    feature: str | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    label: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


class TreeModel:
    """Binary decision tree over :class:`FeatureVector` fields.

    JSON layout::

        {"nodes": [{"feature": "following_rate", "threshold": 10, "left": 1, "right": 2},
                   {"label": "genuine"}, {"label": "bot"}]}

    Node 0 is the root; ``left``/``right`` are indices into ``nodes``.
    """

    def __init__(self, nodes):
        self.nodes = [n if isinstance(n, TreeNode) else TreeNode(**n) for n in nodes]
        self._validate()

    def _validate(self):
        if not self.nodes:
            raise ModelError("tree has no nodes")
        for k, node in enumerate(self.nodes):
            if node.is_leaf:
                if node.label not in (BOT, GENUINE):
                    raise ModelError(f"node {k}: leaf label must be 'bot' or 'genuine'")
                continue
            if node.feature not in FEATURE_NAMES:
                raise ModelError(f"node {k}: unknown feature {node.feature!r}")
            if node.threshold is None:
                raise ModelError(f"node {k}: missing threshold")
            for child in (node.left, node.right):
                if child is None or not 0 <= child < len(self.nodes):
                    raise ModelError(f"node {k}: child index {child!r} out of range")
        # every node reachable from the root exactly once: a tree, hence acyclic
        seen, stack = set(), [0]
        while stack:
            k = stack.pop()
            if k in seen:
                raise ModelError(f"node {k} reached twice; model is not a tree")
            seen.add(k)
            node = self.nodes[k]
            if not node.is_leaf:
                stack.extend([node.left, node.right])

    @classmethod
    def from_dict(cls, d: Mapping) -> "TreeModel":
        if "nodes" not in d:
            raise ModelError("model file lacks a 'nodes' array")
        allowed = {f.name for f in fields(TreeNode)}
        nodes = []
        for k, raw in enumerate(d["nodes"]):
            extra = set(raw) - allowed
            if extra:
                raise ModelError(f"node {k}: unexpected keys {sorted(extra)}")
            nodes.append(TreeNode(**raw))
        return cls(nodes)

    @classmethod
    def load(cls, path) -> "TreeModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"nodes": [{k: v for k, v in asdict(n).items() if v is not None} for n in self.nodes]}


def default_model() -> TreeModel:
    """Hand-built tree over the rule features, shipped for testing."""
    with resources.files("backbone").joinpath("data/default_tree.json").open(encoding="utf-8") as fh:
        return TreeModel.from_dict(json.load(fh))


def classify(fv: FeatureVector, model: TreeModel) -> str:
    k = 0
    while True:
        node = model.nodes[k]
        if node.is_leaf:
            return node.label
        k = node.left if fv.value(node.feature) <= node.threshold else node.right


@dataclass
class BotSummary:
    bots: int
    genuine: int
    unknown: int


def classify_accounts(accounts: Mapping[str, AccountRecord], model: TreeModel, as_of: float):
    """Label every account; accounts without a profile are ``unknown``.

    Returns the label mapping and a :class:`BotSummary`.
    """
    labels = {}
    for uid in sorted(accounts):
        acc = accounts[uid]
        if acc.profile is None:
            labels[uid] = UNKNOWN
            continue
        labels[uid] = classify(extract_features(acc.profile, max(as_of, acc.profile.account_created_at)), model)
        acc.bot = labels[uid] == BOT
    counts = {BOT: 0, GENUINE: 0, UNKNOWN: 0}
    for lab in labels.values():
        counts[lab] += 1
    return labels, BotSummary(counts[BOT], counts[GENUINE], counts[UNKNOWN])
