"""Rule-refinement prompt: metadata, forest rules and output requirements."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from ..data import Dataset, Schema
from ..forest import RuleSet

_INTRO = (
    "You are helping with a supervised learning task on a table of numeric features. "
    "Below you will find summary facts about the dataset followed by decision rules "
    "from a set of CART trees trained on it. Please propose one improved rule."
)

_EXAMPLE = """{
    "feature": 3,
    "threshold": 0.25,
    "operator": "<=",
    "left": {"id": "leaf_1"},
    "right": {
        "feature": 0,
        "threshold": -1.1,
        "operator": "<=",
        "left": {"id": "leaf_2"},
        "right": {"id": "leaf_3"}
    }
}"""

_REQUIREMENT = """Study how the trees above split the data and write a single new tree that partitions the training rows into regions with similar outcomes.
Do not reproduce any one of the given trees; combine and improve their splits.
Use at most {leaf_limit} leaves. Features are referred to by their index.
Answer with the tree only, as strict JSON in exactly this shape:
{example}
Internal nodes have "feature", "threshold", "operator" ("<=" only), "left" and "right"; rows with x[feature] <= threshold go left.
Leaves have a single "id" field, and every id must be unique within the tree.
Leaves carry no predictions."""


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    task_type: str
    n_num_features: int
    n_cat_features: int
    train_size: int

    @property
    def n_features(self) -> int:
        return self.n_num_features + self.n_cat_features

    @classmethod
    def from_dataset(cls, schema: Schema, train: Dataset) -> "DatasetMeta":
        return cls(schema.name, schema.task, schema.n_num, schema.n_cat, train.n)

    def render(self) -> str:
        fields = {
            "name": self.name,
            "task_type": self.task_type,
            "n_num_features": self.n_num_features,
            "n_cat_features": self.n_cat_features,
            "train_size": self.train_size,
        }
        return json.dumps(fields, indent=4)


@dataclass(frozen=True)
class Prompt:
    meta: str
    rules: str
    requirement: str
    n_features: int
    leaf_limit: int

    @property
    def text(self) -> str:
        return self.meta + "\n" + self.rules + "\n" + self.requirement


def build_prompt(meta: DatasetMeta, rules: RuleSet, leaf_limit: int = 30, included_trees: int | None = 10) -> Prompt:
    """Render the refinement prompt with the first ``included_trees`` rule blocks."""
    if len(rules) == 0:
        raise ValueError("rule set is empty")
    shown = rules if included_trees is None else rules.head(included_trees)
    p_meta = _INTRO + "\n# Dataset summary\n" + meta.render()
    p_rule = "# Tree rules\n" + shown.render() + "\n# End of tree rules\n"
    p_req = _REQUIREMENT.format(leaf_limit=leaf_limit, example=_EXAMPLE)
    return Prompt(p_meta, p_rule, p_req, meta.n_features, leaf_limit)


def leaked_cells(prompt_text: str, cells: Iterable[str]) -> set[str]:
    """Cell strings that occur anywhere in the prompt as substrings."""
    return {c for c in set(cells) if c and c in prompt_text}
