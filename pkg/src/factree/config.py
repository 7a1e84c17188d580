"""Run manifest: a YAML file describing documents, models and run settings."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError, TokenizerError
from .gateway.types import MOCK, ModelSpec
from .ingest import DEFAULT_MAX_TOKENS
from .metrics import DEFAULT_BINS
from .stages import STAGE_MAX_TOKENS
from .tokenizers import WHITESPACE, TokenizerSpec
from .tree import Perspective


@dataclass(frozen=True)
class DocumentEntry:
    id: str
    path: Path
    title: Optional[str] = None


@dataclass(frozen=True)
class RunManifest:
    documents: tuple[DocumentEntry, ...]
    models: tuple[ModelSpec, ...]
    judge: ModelSpec
    output: Path
    perspectives: tuple[Perspective, ...] = (Perspective.ANALYTICAL, Perspective.NARRATIVE)
    chunk_max_tokens: int = DEFAULT_MAX_TOKENS
    bins: int = DEFAULT_BINS
    retry_limit: int = 5
    reprompt_limit: int = 3
    concurrency: int = 4
    seed: int = 0
    # model_id -> number of queries to summarize (seeded uniform subset)
    query_subset: dict[str, int] = field(default_factory=dict)
    tokenizer: TokenizerSpec = TokenizerSpec()
    stage_max_tokens: dict[str, int] = field(default_factory=dict)
    gold: Optional[Path] = None
    audit: bool = False

    def __post_init__(self) -> None:
        if not self.documents:
            raise ConfigError("manifest declares no documents")
        if not self.models:
            raise ConfigError("manifest declares no models")
        if not self.perspectives:
            raise ConfigError("manifest declares no perspectives")
        ids = [d.id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise ConfigError("document ids must be unique")
        mids = [m.model_id for m in self.models]
        if len(set(mids)) != len(mids):
            raise ConfigError("model ids must be unique")
        for name, value in (("chunk_max_tokens", self.chunk_max_tokens), ("bins", self.bins),
                            ("retry_limit", self.retry_limit), ("concurrency", self.concurrency)):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.reprompt_limit < 0:
            raise ConfigError("reprompt_limit must be >= 0")
        unknown = set(self.query_subset) - set(mids)
        if unknown:
            raise ConfigError(f"query_subset names unknown model(s) {sorted(unknown)}")
        bad = set(self.stage_max_tokens) - set(STAGE_MAX_TOKENS)
        if bad:
            raise ConfigError(f"stage_max_tokens names unknown stage(s) {sorted(bad)}")

    def mocked(self) -> "RunManifest":
        """The same run with every model and the judge served by the mock provider."""
        def mock(m: ModelSpec) -> ModelSpec:
            return replace(m, provider_kind=MOCK,
                           endpoint=m.endpoint if m.provider_kind == MOCK else None)
        return replace(self, models=tuple(mock(m) for m in self.models), judge=mock(self.judge))


KNOWN_KEYS = {
    "documents", "models", "judge", "output", "perspectives", "chunk_max_tokens", "bins",
    "retry_limit", "reprompt_limit", "concurrency", "seed", "tokenizer", "stage_max_tokens",
    "gold", "audit",
}


def _model(d: Any, base: Path, where: str) -> tuple[ModelSpec, Optional[int]]:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    d = dict(d)
    subset = d.pop("query_subset", None)
    if d.get("provider_kind", MOCK) == MOCK and d.get("endpoint"):
        d["endpoint"] = str((base / d["endpoint"]).resolve())
    try:
        return ModelSpec.from_dict(d), subset
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_manifest(data: Any, base: Path, output: str | Path | None = None) -> RunManifest:
    """Build a manifest from decoded YAML; relative paths resolve against ``base``."""
    if not isinstance(data, dict):
        raise ConfigError("manifest must be a mapping")
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown manifest key(s): {sorted(unknown)}")

    docs = []
    for i, d in enumerate(data.get("documents") or []):
        if not isinstance(d, dict) or "id" not in d or "path" not in d:
            raise ConfigError(f"documents[{i}] needs 'id' and 'path'")
        docs.append(DocumentEntry(str(d["id"]), (base / d["path"]).resolve(), d.get("title")))

    models, subsets = [], {}
    for i, m in enumerate(data.get("models") or []):
        spec, subset = _model(m, base, f"models[{i}]")
        models.append(spec)
        if subset is not None:
            if not isinstance(subset, int) or subset < 0:
                raise ConfigError(f"models[{i}].query_subset must be a non-negative integer")
            subsets[spec.model_id] = subset
    if "judge" not in data:
        raise ConfigError("manifest needs a judge model")
    judge, _ = _model(data["judge"], base, "judge")

    try:
        perspectives = tuple(Perspective(p) for p in data.get("perspectives", ["analytical", "narrative"]) or [])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    tok = data.get("tokenizer") or {}
    try:
        vocab = tok.get("vocabulary")
        tokenizer = TokenizerSpec(
            kind=tok.get("kind", WHITESPACE),
            vocabulary_source=str((base / vocab).resolve()) if vocab else None,
        )
    except TokenizerError as exc:
        raise ConfigError(str(exc)) from exc

    out = output if output is not None else data.get("output", "out")
    kwargs = {k: data[k] for k in ("chunk_max_tokens", "bins", "retry_limit", "reprompt_limit",
                                   "concurrency", "seed", "audit") if k in data}
    return RunManifest(
        documents=tuple(docs),
        models=tuple(models),
        judge=judge,
        output=(base / out).resolve(),
        perspectives=perspectives,
        query_subset=subsets,
        tokenizer=tokenizer,
        stage_max_tokens=dict(data.get("stage_max_tokens") or {}),
        gold=(base / data["gold"]).resolve() if data.get("gold") else None,
        **kwargs,
    )


def load_manifest(path: str | Path, output: str | Path | None = None) -> RunManifest:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    return parse_manifest(data, path.parent, output)
