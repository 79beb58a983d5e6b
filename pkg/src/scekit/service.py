"""HTTP session API for interactive listening tests.

Exposes parameter fitting by paired comparison, three-interval clarity
preference, and MUSHRA rating sessions to a browser client.  Stimuli are
rendered server-side when a trial is issued, cached by content digest,
and served as opaque tokens so listeners never see condition labels.

Sessions live in memory with an on-disk JSON-lines log per session; one
trial is outstanding at a time and responses are idempotent by trial id.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import __version__
from .audio import AudioBuffer, read_wav, wav_bytes
from .enhance import SceParams
from .errors import SceError
from .gafit import GaConfig, Genome, ParameterGrid, evolve_generation, init_population
from .mixing import MixSpec, make_ssn, mix_at_smr
from .pipeline import enhance_ungated, enhance_with_isnr, resynthesize
from .snr import GateConfig
from .synth import pseudo_speech

SESSION_TTL_S = 2 * 60 * 60
CP_PROMPT = "which sentence of the intervals is the best of clarity for you?"
ISI_MS = 500.0


class CreateSessionRequest(BaseModel):
    kind: str
    config: dict = {}


class ResponseBody(BaseModel):
    trial_id: str
    answer: int | list[float]


@dataclass
class TrialRecord:
    trial_id: str
    schema: str
    stimuli: list
    prompt: str
    meta: Optional[dict] = None


class StimulusStore:
    """Content-addressed WAV bytes served under opaque tokens."""

    def __init__(self):
        self._bytes: dict[str, bytes] = {}

    def put(self, data: bytes) -> str:
        token = hashlib.sha1(data).hexdigest()[:20]
        self._bytes[token] = data
        return token

    def put_buffer(self, buffer: AudioBuffer) -> str:
        return self.put(wav_bytes(buffer))

    def get(self, token: str) -> Optional[bytes]:
        return self._bytes.get(token)


def _demo_stimuli(seed: int) -> dict:
    """Small synthetic stimulus set for self-contained demo sessions."""
    clean = pseudo_speech(1.2, seed=seed)
    masker = make_ssn([pseudo_speech(1.2, seed=seed + 1)], 2.5, seed=seed + 2)
    mixed = mix_at_smr(clean, masker, MixSpec(smr_db=0.0, masker_lead_ms=200.0))
    return {"target": mixed.target, "masker": mixed.masker, "mixture": mixed.mixture}


def _render_processing(stems: dict, ptype: str, params: SceParams) -> AudioBuffer:
    if ptype == "unprocessed":
        return resynthesize(stems["mixture"])
    if ptype == "enhanced":
        return enhance_ungated(stems["mixture"], params).audio
    if ptype == "enhanced_gated":
        return enhance_with_isnr(stems["target"], stems["masker"], params).audio
    raise SceError(f"unknown processing type {ptype!r}")


def _lowpass_anchor(buffer: AudioBuffer) -> AudioBuffer:
    """MUSHRA-style anchor: a 3.5 kHz lowpass of the reference."""
    from scipy import signal as sp_signal

    sos = sp_signal.butter(4, 3500.0, fs=buffer.sample_rate_hz, output="sos")
    return AudioBuffer(sp_signal.sosfilt(sos, buffer.samples), buffer.sample_rate_hz)


class GaFitSession:
    """Round-robin paired comparisons drive one GA generation at a time."""

    def __init__(self, config: dict, store: StimulusStore, stimulus_dir):
        self.grid = (
            ParameterGrid.experiment_ii()
            if config.get("mode") == "experiment-ii"
            else ParameterGrid()
        )
        self.cfg = GaConfig(
            population_size=int(config.get("population_size", 6)),
            mutation_rate=float(config.get("mutation_rate", 0.15)),
            max_generations=int(config.get("max_generations", 8)),
            convergence_patience=int(config.get("convergence_patience", 3)),
            rng_seed=int(config.get("seed", 0)),
        )
        self.expose_meta = bool(config.get("expose_meta", False))
        self.gate = GateConfig(float(config.get("gate_threshold", 0.0)))
        self.store = store
        self.stems = self._load_stems(config, stimulus_dir)
        self.rng = np.random.default_rng(self.cfg.rng_seed)
        self.population = init_population(self.grid, self.cfg, self.rng)
        self.generation = 0
        self.wins = [0.0] * len(self.population)
        self.pairs = list(itertools.combinations(range(len(self.population)), 2))
        self.pair_index = 0
        self.history: list[dict] = []
        self.done = False
        self._stale = 0
        self._previous_elite: Optional[Genome] = None
        self._render_cache: dict[tuple, str] = {}

    def _load_stems(self, config: dict, stimulus_dir) -> dict:
        if config.get("demo", False):
            return _demo_stimuli(int(config.get("seed", 0)))
        stim = config.get("stimulus")
        if not stim:
            raise SceError("ga_fit config needs 'demo': true or a 'stimulus' entry")
        base = Path(stimulus_dir) if stimulus_dir else Path(".")
        clean = read_wav(base / stim["clean"])
        masker = read_wav(base / stim["masker"], expect_rate=clean.sample_rate_hz)
        mixed = mix_at_smr(
            clean, masker,
            MixSpec(float(stim.get("smr_db", 0.0)), float(stim.get("lead_ms", 500.0))),
        )
        return {"target": mixed.target, "masker": mixed.masker, "mixture": mixed.mixture}

    def _token_for(self, genome: Genome) -> str:
        key = genome.as_tuple()
        if key not in self._render_cache:
            params = self.grid.params(genome)
            audio = enhance_with_isnr(
                self.stems["target"], self.stems["masker"], params, self.gate
            ).audio
            self._render_cache[key] = self.store.put_buffer(audio)
        return self._render_cache[key]

    def next_payload(self) -> Optional[dict]:
        if self.done:
            return None
        i, j = self.pairs[self.pair_index]
        a, b = self.population[i], self.population[j]
        payload = {
            "schema": "pick_one_of_2",
            "stimuli": [self._token_for(a), self._token_for(b)],
            "prompt": "which interval is easier to understand?",
            "progress": {
                "generation": self.generation,
                "pair": self.pair_index,
                "pairs_per_generation": len(self.pairs),
                "max_generations": self.cfg.max_generations,
            },
        }
        if self.expose_meta:
            payload["meta"] = {
                "a": self.grid.params(a).to_dict(),
                "b": self.grid.params(b).to_dict(),
            }
        return payload

    def submit(self, answer) -> None:
        if not isinstance(answer, int) or answer not in (0, 1):
            raise HTTPException(422, "answer must be 0 or 1")
        i, j = self.pairs[self.pair_index]
        self.wins[i if answer == 0 else j] += 1.0
        self.pair_index += 1
        if self.pair_index < len(self.pairs):
            return
        best = int(np.argmax(self.wins))
        elite = self.population[best]
        self.history.append(
            {
                "generation": self.generation,
                "genomes": [self.grid.params(g).to_dict() for g in self.population],
                "scores": list(self.wins),
                "elite": self.grid.params(elite).to_dict(),
            }
        )
        self._stale = self._stale + 1 if elite == self._previous_elite else 0
        self._previous_elite = elite
        self.generation += 1
        if self._stale >= self.cfg.convergence_patience or self.generation >= self.cfg.max_generations:
            self.done = True
            return
        self.population = evolve_generation(
            self.population, self.wins, self.grid, self.cfg, self.rng
        )
        self.wins = [0.0] * len(self.population)
        self.pair_index = 0

    def results(self) -> dict:
        out = {"kind": "ga_fit", "history": self.history, "finished": self.done}
        if self.history:
            out["best"] = self.history[-1]["elite"]
        return out


class ClaritySession:
    """Three-interval forced choice over conditions x sentences."""

    def __init__(self, config: dict, store: StimulusStore, stimulus_dir):
        self.store = store
        self.seed = int(config.get("seed", 0))
        self.rng = np.random.default_rng(self.seed)
        self.ptypes = tuple(config.get("processing_types", ("unprocessed", "enhanced", "enhanced_gated")))
        self.trials = self._build_trials(config, stimulus_dir)
        self.index = 0
        self.responses: list[tuple] = []
        self.done = not self.trials

    def _build_trials(self, config: dict, stimulus_dir) -> list[dict]:
        if config.get("demo", False):
            n = int(config.get("n_trials", 5))
            params = SceParams(b=1.0, xi=0.9, m=5, s=3.0)
            stems = _demo_stimuli(self.seed)
            tokens = {
                p: self.store.put_buffer(_render_processing(stems, p, params))
                for p in self.ptypes
            }
            condition_map = {"demo": {p: [tokens[p]] * n for p in self.ptypes}}
        else:
            conditions = config.get("conditions")
            if not conditions:
                raise SceError("clarity config needs 'demo': true or 'conditions'")
            base = Path(stimulus_dir) if stimulus_dir else Path(".")
            condition_map = {}
            for cond, by_type in conditions.items():
                condition_map[cond] = {}
                for ptype in self.ptypes:
                    paths = by_type[ptype]
                    paths = [paths] if isinstance(paths, str) else list(paths)
                    condition_map[cond][ptype] = [
                        self.store.put_buffer(read_wav(base / p)) for p in paths
                    ]
        trials = []
        cond_order = list(condition_map)
        self.rng.shuffle(cond_order)
        for cond in cond_order:
            by_type = condition_map[cond]
            n_sentences = min(len(v) for v in by_type.values())
            for s in range(n_sentences):
                order = [self.ptypes[k] for k in self.rng.permutation(len(self.ptypes))]
                trials.append(
                    {
                        "condition": cond,
                        "sentence": s,
                        "intervals": order,
                        "stimuli": [by_type[p][s] for p in order],
                    }
                )
        return trials

    def next_payload(self) -> Optional[dict]:
        if self.done:
            return None
        trial = self.trials[self.index]
        return {
            "schema": "pick_one_of_3",
            "stimuli": list(trial["stimuli"]),
            "prompt": CP_PROMPT,
            "progress": {"answered": self.index, "total": len(self.trials)},
        }

    def submit(self, answer) -> None:
        if not isinstance(answer, int) or not 0 <= answer < 3:
            raise HTTPException(422, "answer must be an interval index 0..2")
        trial = self.trials[self.index]
        self.responses.append((trial["condition"], trial["intervals"][answer]))
        self.index += 1
        self.done = self.index >= len(self.trials)

    def results(self) -> dict:
        from .protocols import score_preference

        out = {
            "kind": "clarity",
            "finished": self.done,
            "n_responses": len(self.responses),
        }
        if self.responses:
            out["percentages"] = score_preference(self.responses, self.ptypes)
        return out


class MushraSession:
    """Rating sliders over processed versions plus hidden reference and anchor."""

    def __init__(self, config: dict, store: StimulusStore, stimulus_dir):
        self.store = store
        self.seed = int(config.get("seed", 0))
        self.rng = np.random.default_rng(self.seed)
        self.ptypes = tuple(config.get("processing_types", ("unprocessed", "enhanced", "enhanced_gated")))
        self.trials = self._build_trials(config, stimulus_dir)
        self.index = 0
        self.ratings: list[tuple] = []
        self.done = not self.trials

    def _labels(self) -> list[str]:
        return list(self.ptypes) + ["reference", "anchor"]

    def _build_trials(self, config: dict, stimulus_dir) -> list[dict]:
        if config.get("demo", False):
            n = int(config.get("n_trials", 2))
            params = SceParams(b=1.0, xi=0.9, m=5, s=3.0)
            stems = _demo_stimuli(self.seed)
            reference = resynthesize(stems["target"])
            tokens = {
                p: self.store.put_buffer(_render_processing(stems, p, params))
                for p in self.ptypes
            }
            tokens["reference"] = self.store.put_buffer(reference)
            tokens["anchor"] = self.store.put_buffer(_lowpass_anchor(reference))
            condition_map = {"demo": {lab: [tokens[lab]] * n for lab in self._labels()}}
        else:
            conditions = config.get("conditions")
            if not conditions:
                raise SceError("mushra config needs 'demo': true or 'conditions'")
            base = Path(stimulus_dir) if stimulus_dir else Path(".")
            condition_map = {}
            for cond, by_label in conditions.items():
                condition_map[cond] = {}
                for label in self.ptypes + ("reference",):
                    paths = by_label[label]
                    paths = [paths] if isinstance(paths, str) else list(paths)
                    condition_map[cond][label] = [
                        self.store.put_buffer(read_wav(base / p)) for p in paths
                    ]
                anchors = []
                for p in ([by_label["reference"]] if isinstance(by_label["reference"], str)
                          else by_label["reference"]):
                    anchors.append(
                        self.store.put_buffer(_lowpass_anchor(read_wav(base / p)))
                    )
                condition_map[cond]["anchor"] = anchors
        trials = []
        for cond, by_label in condition_map.items():
            n_sentences = min(len(v) for v in by_label.values())
            for s in range(n_sentences):
                labels = self._labels()
                order = [labels[k] for k in self.rng.permutation(len(labels))]
                trials.append(
                    {
                        "condition": cond,
                        "sentence": s,
                        "labels": order,
                        "stimuli": [by_label[lab][s] for lab in order],
                    }
                )
        return trials

    def next_payload(self) -> Optional[dict]:
        if self.done:
            return None
        trial = self.trials[self.index]
        return {
            "schema": "ratings_0_100",
            "stimuli": list(trial["stimuli"]),
            "prompt": "rate each stimulus from 0 to 100",
            "progress": {"answered": self.index, "total": len(self.trials)},
        }

    def submit(self, answer) -> None:
        trial = self.trials[self.index]
        if (
            not isinstance(answer, list)
            or len(answer) != len(trial["stimuli"])
            or not all(isinstance(v, (int, float)) and 0.0 <= v <= 100.0 for v in answer)
        ):
            raise HTTPException(422, "answer must be one 0..100 rating per stimulus")
        for label, rating in zip(trial["labels"], answer):
            self.ratings.append((trial["condition"], label, float(rating)))
        self.index += 1
        self.done = self.index >= len(self.trials)

    def results(self) -> dict:
        from .protocols import score_mushra, screen_mushra_listener

        out = {"kind": "mushra", "finished": self.done, "n_trials_rated": self.index}
        if self.ratings:
            scores = score_mushra(self.ratings)
            out["scores"] = [
                {"condition": c, "label": l, "mean": s.mean, "se": s.se, "n": s.n}
                for (c, l), s in sorted(scores.items())
            ]
            out["screening"] = screen_mushra_listener(self.ratings)
        return out


ENGINES = {"ga_fit": GaFitSession, "clarity": ClaritySession, "mushra": MushraSession}


@dataclass
class Session:
    id: str
    kind: str
    engine: object
    log_path: Optional[Path]
    state: str = "created"
    trial_counter: int = 0
    outstanding: Optional[TrialRecord] = None
    payload_extra: dict = field(default_factory=dict)
    last_ack: Optional[dict] = None
    expires_at: float = field(default_factory=lambda: time.time() + SESSION_TTL_S)

    def log(self, event: str, **payload):
        if self.log_path is None:
            return
        record = {"ts": time.time(), "event": event, **payload}
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")

    def touch(self):
        self.expires_at = time.time() + SESSION_TTL_S

    @property
    def expired(self) -> bool:
        return time.time() > self.expires_at


def create_app(stimulus_dir=None, log_dir=None, seed: int = 0) -> FastAPI:
    app = FastAPI(title="scekit session service", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = StimulusStore()
    sessions: dict[str, Session] = {}
    log_base = Path(log_dir) if log_dir else None
    if log_base:
        log_base.mkdir(parents=True, exist_ok=True)

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, "unknown session")
        if session.expired and session.state != "finished":
            raise HTTPException(409, "session timeout")
        return session

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        engine_cls = ENGINES.get(req.kind)
        if engine_cls is None:
            raise HTTPException(422, f"unknown session kind {req.kind!r}")
        config = dict(req.config)
        config.setdefault("seed", seed)
        session_id = uuid.uuid4().hex[:12]
        try:
            engine = engine_cls(config, store, stimulus_dir)
        except (SceError, KeyError, TypeError, ValueError) as exc:
            raise HTTPException(422, f"bad session config: {exc}") from exc
        log_path = log_base / f"session-{session_id}.jsonl" if log_base else None
        session = Session(session_id, req.kind, engine, log_path)
        sessions[session_id] = session
        session.log("created", kind=req.kind, config=config)
        return {"id": session_id, "kind": req.kind, "state": session.state}

    @app.get("/sessions/{session_id}/trial")
    def get_trial(session_id: str):
        session = get_session(session_id)
        if session.engine.done:
            session.state = "finished"
            return {"status": "finished"}
        if session.outstanding is None:
            payload = session.engine.next_payload()
            session.trial_counter += 1
            session.outstanding = TrialRecord(
                trial_id=f"t{session.trial_counter:04d}",
                schema=payload["schema"],
                stimuli=payload["stimuli"],
                prompt=payload["prompt"],
                meta=payload.get("meta"),
            )
            session.state = "awaiting_response"
            session.log("trial_issued", trial_id=session.outstanding.trial_id,
                        stimuli=payload["stimuli"])
            session.payload_extra = {k: v for k, v in payload.items()
                                     if k not in ("schema", "stimuli", "prompt", "meta")}
        session.touch()
        trial = session.outstanding
        body = {
            "trial_id": trial.trial_id,
            "schema": trial.schema,
            "stimuli": [f"/stimuli/{t}" for t in trial.stimuli],
            "prompt": trial.prompt,
            "isi_ms": ISI_MS,
            **session.payload_extra,
        }
        if trial.meta is not None:
            body["meta"] = trial.meta
        return body

    @app.post("/sessions/{session_id}/response")
    def post_response(session_id: str, body: ResponseBody):
        session = get_session(session_id)
        if session.last_ack and body.trial_id == session.last_ack["trial_id"]:
            return session.last_ack["ack"]
        if session.outstanding is None or body.trial_id != session.outstanding.trial_id:
            raise HTTPException(409, "stale or unknown trial_id")
        session.state = "processing"
        session.engine.submit(body.answer)
        session.log("response", trial_id=body.trial_id, answer=body.answer)
        session.outstanding = None
        if session.engine.done:
            session.state = "finished"
            session.log("finished")
        else:
            session.state = "awaiting_response"
        ack = {
            "accepted": True,
            "trial_id": body.trial_id,
            "state": session.state,
            "next": "finished" if session.engine.done else "trial",
        }
        session.last_ack = {"trial_id": body.trial_id, "ack": ack}
        session.touch()
        return ack

    @app.get("/sessions/{session_id}/results")
    def get_results(session_id: str):
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, "unknown session")
        out = session.engine.results()
        out["state"] = "finished" if session.engine.done else session.state
        return out

    @app.get("/stimuli/{token}")
    def get_stimulus(token: str):
        data = store.get(token)
        if data is None:
            raise HTTPException(404, "unknown stimulus")
        return Response(content=data, media_type="audio/wav")

    return app
