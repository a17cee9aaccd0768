"""FastAPI service exposing one endpoint per experiment."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..puf import distinguish, enroll, respond, verify
from ..reservoir import SweepConfig, run_narma_benchmark, random_narma_series, sweep_to_csv, vfd_sweep
from ..selftest import run_selftest, selftest_to_csv
from ..swh import ChannelConfig
from ..tpf import run_tpf_experiment, train_tpf_pipeline
from ..twin import DigitalTwin
from ..vbm import LoopParams, comparison_to_csv, run_vbm_comparison
from . import schemas

NARMA_HEADER = "mode,nrmse,improvement"
PUF_HEADER = "trial,kind,statistic,accept"


def create_app() -> FastAPI:
    app = FastAPI(title="siliclab", version=__version__)

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/selftest", response_model=schemas.SelftestResponse)
    def selftest(req: schemas.SelftestRequest) -> schemas.SelftestResponse:
        checks = run_selftest(seed=req.seed, n_joints=req.n_joints)
        return schemas.SelftestResponse(
            passed=all(c.passed for c in checks),
            checks=[schemas.CheckResultModel(name=c.name, passed=c.passed,
                                             detail=c.detail) for c in checks],
            csv=selftest_to_csv(checks),
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
        cfg = SweepConfig(
            voltages=tuple(req.voltages), frequencies=tuple(req.frequencies),
            difficulties=tuple(req.difficulties),
            samples_per_cell=req.samples_per_cell,
            window_seconds=req.window_seconds,
        )
        rows = vfd_sweep(cfg, req.profile.to_profile(), seed=req.seed)
        return schemas.SweepResponse(rows=len(rows), csv=sweep_to_csv(rows))

    @app.post("/narma", response_model=schemas.NarmaResponse)
    def narma(req: schemas.NarmaRequest) -> schemas.NarmaResponse:
        series = random_narma_series(req.length, seed=req.seed)
        profile = req.profile.to_profile()
        channel = req.channel.to_channel()
        results = []
        for mode in req.modes:
            score, improvement = run_narma_benchmark(
                mode, DigitalTwin(profile), channel, series,
                seed=req.seed, pipeline_depth=req.pipeline_depth,
            )
            results.append(schemas.NarmaResult(mode=mode, nrmse=score,
                                               improvement=improvement))
        lines = [NARMA_HEADER]
        lines += [f"{r.mode},{r.nrmse:.6f},{r.improvement:.6f}" for r in results]
        return schemas.NarmaResponse(results=results, csv="\n".join(lines) + "\n")

    @app.post("/tpf", response_model=schemas.TpfResponse)
    def tpf(req: schemas.TpfRequest) -> schemas.TpfResponse:
        profile = req.profile.to_profile()
        policy = train_tpf_pipeline(
            profile, n_train=req.n_train, k=req.decision_round,
            difficulty=req.difficulty, seed=req.seed,
            full_execution_rate=req.full_execution_rate,
        )
        report = run_tpf_experiment(DigitalTwin(profile), policy, req.n_eval,
                                    seed=req.seed + 1, difficulty=req.difficulty)
        return schemas.TpfResponse(metrics=report.metrics,
                                   no_signal=report.metrics["no_signal"],
                                   report=report.to_text())

    @app.post("/vbm", response_model=schemas.VbmResponse)
    def vbm(req: schemas.VbmRequest) -> schemas.VbmResponse:
        params = LoopParams(
            t_hash=req.t_hash, t_network=req.t_network, t_stratum=req.t_stratum,
            duration=req.duration, buffer_depth=req.buffer_depth,
            network_jitter_sigma=req.network_jitter_sigma,
        )
        comparison = run_vbm_comparison(params, seed=req.seed)
        return schemas.VbmResponse(
            serial_efficiency=comparison.serial.efficiency,
            vbm_efficiency=comparison.vbm.efficiency,
            throughput_gain=comparison.throughput_gain,
            csv=comparison_to_csv([comparison]),
        )

    @app.post("/puf", response_model=schemas.PufResponse)
    def puf(req: schemas.PufRequest) -> schemas.PufResponse:
        device = req.device.to_profile()
        impostor = req.impostor.to_profile()
        challenges = tuple(req.challenges)
        profile = enroll(device, challenges, req.samples_per_challenge,
                         seed=req.seed)
        accepts = rejects = 0
        lines = [PUF_HEADER]
        for t in range(req.n_trials):
            genuine = verify(profile, respond(device, challenges,
                                              req.samples_per_challenge,
                                              seed=req.seed * 1000 + 2 * t),
                             threshold=req.threshold)
            forged = verify(profile, respond(impostor, challenges,
                                             req.samples_per_challenge,
                                             seed=req.seed * 1000 + 2 * t + 1),
                            threshold=req.threshold)
            accepts += int(genuine.accept)
            rejects += int(not forged.accept)
            lines.append(f"{t},genuine,{genuine.statistic:.6f},"
                         f"{str(genuine.accept).lower()}")
            lines.append(f"{t},impostor,{forged.statistic:.6f},"
                         f"{str(forged.accept).lower()}")
        impostor_profile = enroll(impostor, challenges,
                                  req.samples_per_challenge, seed=req.seed + 1)
        found = distinguish(profile, impostor_profile, tol=req.threshold)
        witness = None
        if found is not None:
            challenge, bucket, gap = found
            witness = schemas.PufWitness(challenge=challenge, bucket=bucket,
                                         gap=gap)
        return schemas.PufResponse(trials=req.n_trials, accepts=accepts,
                                   rejects=rejects, witness=witness,
                                   csv="\n".join(lines) + "\n")

    return app
