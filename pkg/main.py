# main.py
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from fastapi import Body, FastAPI, HTTPException, Query
from pydantic import ValidationError

import scenario
from errors import EXIT_CONFIG, EXIT_IO, exit_code_for
from models import LinkReport, PartitionSweep, ScenarioConfig, SpacingRequest, SpacingSweep

load_dotenv()

logger = logging.getLogger(__name__)

# Relative pattern / Touchstone paths in posted configs resolve against this directory.
SCENARIO_BASE_DIR = Path(os.getenv("FDSIM_SCENARIO_DIR", "."))

app = FastAPI(title="Full-duplex massive-MIMO link simulator", version="0.1.0")


# ---------- helpers ----------
def _http_error(e: Exception) -> HTTPException:
    code = exit_code_for(e)
    if isinstance(e, ValidationError) or code == EXIT_CONFIG:
        return HTTPException(status_code=422, detail=str(e))
    if code == EXIT_IO:
        return HTTPException(status_code=400, detail=str(e))
    logger.exception("[api] numerical failure")
    return HTTPException(status_code=500, detail=f"numerical failure: {e}")


def _validated(model, body: Dict[str, Any]):
    # validated here rather than by FastAPI so file checks see SCENARIO_BASE_DIR
    return model.model_validate(body, context={"base_dir": SCENARIO_BASE_DIR})


# ---------- routes ----------
@app.get("/health")
def health():
    return {"ok": True}


@app.post("/run", response_model=LinkReport)
def run(
    body: Dict[str, Any] = Body(...),
    seed: Optional[int] = Query(None, ge=0),
    strict_paper: bool = Query(False),
):
    try:
        cfg = _validated(ScenarioConfig, body)
        return scenario.evaluate(cfg, SCENARIO_BASE_DIR, seed=seed, strict=strict_paper)
    except Exception as e:
        raise _http_error(e)


@app.post("/sweep/partition", response_model=PartitionSweep)
def sweep_partition(
    body: Dict[str, Any] = Body(...),
    seed: Optional[int] = Query(None, ge=0),
    strict_paper: bool = Query(False),
):
    try:
        cfg = _validated(ScenarioConfig, body)
        return scenario.partition_table(cfg, SCENARIO_BASE_DIR, seed=seed, strict=strict_paper)
    except Exception as e:
        raise _http_error(e)


@app.post("/sweep/spacing", response_model=SpacingSweep)
def sweep_spacing(
    body: Dict[str, Any] = Body(...),
    seed: Optional[int] = Query(None, ge=0),
    strict_paper: bool = Query(False),
):
    try:
        req = _validated(SpacingRequest, body)
        return scenario.spacing_table(req.config, req.spacings_wl, SCENARIO_BASE_DIR, seed=seed,
                                      strict=strict_paper)
    except Exception as e:
        raise _http_error(e)
