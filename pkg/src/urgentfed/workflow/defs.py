"""Loading and cross-validation of the definition set.

A definition directory holds ``activities/*.yaml``, ``rules/*.yaml``
(one rule-set per file, named by the file stem), ``ensembles/*.yaml``
and ``grids/*.txt``. The raw texts travel in the ``defs_loaded`` log
record so a recovered server rebuilds exactly the definitions it was
running with, not whatever happens to be on disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..ensemble.reduction import build_pipeline
from ..errors import DocumentSchemaError
from .documents import (
    ActivityDocument, EnsembleTemplate, Rule,
    parse_activity, parse_ensemble_template, parse_rules,
)

DEFAULT_DEFS = Path(__file__).resolve().parent.parent / "defs"


@dataclass
class DefinitionSet:
    activities: dict[str, ActivityDocument]
    rulesets: dict[str, list[Rule]]
    templates: dict[str, EnsembleTemplate]
    grids: dict[str, str]
    texts: dict

    @classmethod
    def from_dir(cls, path: str | Path | None = None) -> "DefinitionSet":
        base = Path(path) if path is not None else DEFAULT_DEFS
        texts = {"activities": {}, "rules": {}, "templates": {}, "grids": {}}
        for sub, key, pattern in (("activities", "activities", "*.yaml"),
                                  ("rules", "rules", "*.yaml"),
                                  ("ensembles", "templates", "*.yaml"),
                                  ("grids", "grids", "*.txt")):
            folder = base / sub
            if folder.is_dir():
                for file in sorted(folder.glob(pattern)):
                    texts[key][file.stem] = file.read_text()
        return cls.from_texts(texts)

    @classmethod
    def from_texts(cls, texts: dict) -> "DefinitionSet":
        activities = {}
        for name, text in texts.get("activities", {}).items():
            doc = parse_activity(text)
            activities[doc.activity_id] = doc
        templates = {}
        for name, text in texts.get("templates", {}).items():
            template = parse_ensemble_template(text)
            templates[template.name] = template
        rulesets = {}
        for name, text in texts.get("rules", {}).items():
            rulesets[name] = parse_rules(text)
        defs = cls(activities=activities, rulesets=rulesets, templates=templates,
                   grids=dict(texts.get("grids", {})), texts=texts)
        defs.validate()
        return defs

    def validate(self) -> None:
        for ruleset, rules in self.rulesets.items():
            for rule in rules:
                for action in rule.actions:
                    if action.kind == "start_activity":
                        target = action.spec["activity"]
                        if target not in self.activities:
                            raise DocumentSchemaError(
                                f"rule '{rule.rule_id}' starts unknown activity '{target}'",
                                field=f"{ruleset}.actions")
                    elif action.kind == "spawn_ensemble":
                        target = action.spec["template"]
                        if target not in self.templates:
                            raise DocumentSchemaError(
                                f"rule '{rule.rule_id}' spawns unknown template '{target}'",
                                field=f"{ruleset}.actions")
        for name, template in self.templates.items():
            build_pipeline(template.pipeline, pipeline_id=name)  # validates
            grid_name = template.params.get("grid")
            if grid_name is not None and grid_name not in self.grids:
                raise DocumentSchemaError(
                    f"template '{name}' references unknown grid '{grid_name}'",
                    field="params.grid")
