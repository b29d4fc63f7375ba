#!/usr/bin/env python3
"""
src/harness/cli.py

📋 역할: 명령행 인터페이스
- synth: HDR 소스 + 노출 스케줄 → LDR 프레임 + 매니페스트
- train: 설정 파일 + 매니페스트 → 체크포인트 / 학습 곡선
- reconstruct: 체크포인트 + 시퀀스 → HDR 프레임(EXR) + 톤매핑 미리보기
- eval: 예측 + GT → EvalReport JSON (+ 선택적 그래프)

종료 코드: 0 성공, 1 사용법/설정 오류, 2 데이터 오류, 3 수치 오류
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from config.settings import Settings
from src.analyzers.evaluator import evaluate, plot_report
from src.generators.sequence_generator import ExposureSchedule, add_linear_noise, synthesize_sequence
from src.harness.config import ConfigurationError, TrainConfig, load_config
from src.harness.reconstructor import VideoReconstructor, check_length
from src.harness.trainer import train_stage
from src.imaging.frames import LdrFrame
from src.integrations.checkpoint import load_checkpoint
from src.integrations.frame_io import (
    HDR_EXTENSIONS, list_frames, read_hdr_frame, write_hdr_frame, write_ldr_frame, write_preview,
)
from src.integrations.manifest import (
    DatasetManifest, FrameEntry, SequenceEntry, load_manifest, load_sequence, save_manifest,
)

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# 음수로 시작하는 쉼표 목록 값을 받는 옵션
LIST_OPTIONS = ("--ev",)


def _fold_list_options(argv: List[str]) -> List[str]:
    """`--ev -2,2` → `--ev=-2,2`"""
    folded, index = [], 0
    while index < len(argv):
        token = argv[index]
        if token in LIST_OPTIONS and index + 1 < len(argv):
            folded.append(f"{token}={argv[index + 1]}")
            index += 2
            continue
        folded.append(token)
        index += 1
    return folded


def _parse_evs(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"EV 목록 형식이 올바르지 않습니다: {text}")


def _schedule_from_args(args) -> ExposureSchedule:
    if args.ev:
        return ExposureSchedule.from_ev(args.ev, base=args.base_exposure)
    schedule = ExposureSchedule.from_preset(args.schedule)
    if args.base_exposure != 1.0:
        schedule = ExposureSchedule(schedule.period, [t * args.base_exposure for t in schedule.exposures])
    return schedule


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="학습 설정 JSON 파일")
    common.add_argument("--seed", type=int, default=None, help="난수 시드")
    common.add_argument("--output", type=str, default=Settings.OUTPUT_DIR, help="출력 디렉터리")
    common.add_argument("--device", type=str, default=Settings.DEVICE, help="torch 디바이스 (cpu, cuda:0 ...)")

    parser = argparse.ArgumentParser(prog="hdrv", description="교차 노출 LDR 비디오 → HDR 비디오 복원")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="HDR 소스로 교차 노출 시퀀스 합성")
    synth.add_argument("--hdr-dir", required=True, help="HDR 소스 프레임 디렉터리 (.exr / .hdr)")
    synth.add_argument("--schedule", choices=sorted(Settings.SCHEDULE_PRESETS), default="2exp")
    synth.add_argument("--ev", type=_parse_evs, default=None, help="EV 목록 (예: --ev -2,2)")
    synth.add_argument("--base-exposure", type=float, default=1.0)
    synth.add_argument("--noise-sigma", type=float, default=0.0, help="저노출 프레임에만 더할 선형 노이즈")
    synth.add_argument("--name", default="synthetic")

    train = sub.add_parser("train", parents=[common], help="단계별 학습")
    train.add_argument("--manifest", required=True)
    train.add_argument("--stage", choices=["coarse", "refine", "finetune"], default=None)
    train.add_argument("--init", default=None, help="선행 단계 체크포인트")

    recon = sub.add_parser("reconstruct", parents=[common], help="시퀀스 HDR 복원")
    recon.add_argument("--checkpoint", required=True)
    recon.add_argument("--manifest", required=True)
    recon.add_argument("--sequence", default=None)
    recon.add_argument("--align", action="store_true", help="전역 similarity 사전 정렬")

    ev = sub.add_parser("eval", parents=[common], help="복원 결과 평가")
    ev.add_argument("--pred", required=True, help="예측 HDR 디렉터리")
    ev.add_argument("--gt", required=True, help="GT HDR 디렉터리")
    ev.add_argument("--manifest", default=None, help="역할 결정용 매니페스트")
    ev.add_argument("--sequence", default=None)
    ev.add_argument("--schedule", choices=sorted(Settings.SCHEDULE_PRESETS), default=None)
    ev.add_argument("--plot", action="store_true", help="프레임별 PSNR 그래프 저장")
    return parser


# ========================================
# 서브커맨드
# ========================================

def cmd_synth(args) -> int:
    schedule = _schedule_from_args(args)
    sources = list_frames(args.hdr_dir, HDR_EXTENSIONS)
    if not sources:
        raise ValueError(f"HDR 소스 프레임이 없습니다: {args.hdr_dir}")
    hdr_frames = [read_hdr_frame(p) for p in sources]
    sequence = synthesize_sequence(hdr_frames, schedule, name=args.name)

    output = Path(args.output)
    frames_dir = output / "frames"
    rng = np.random.default_rng(args.seed if args.seed is not None else Settings.SEED)
    low_exposure = min(schedule.exposures)
    entries = []
    for index, (frame, hdr) in enumerate(zip(sequence.frames, hdr_frames)):
        pixels = frame.pixels
        if args.noise_sigma > 0 and np.isclose(frame.exposure_t, low_exposure):
            pixels = add_linear_noise(pixels, args.noise_sigma, frame.gamma, rng)
        ldr_path = frames_dir / f"ldr_{index:05d}.png"
        gt_path = frames_dir / f"gt_{index:05d}.exr"
        write_ldr_frame(ldr_path, LdrFrame(pixels, frame.exposure_t, frame.gamma))
        write_hdr_frame(gt_path, hdr)
        entries.append(FrameEntry(path=str(ldr_path.relative_to(output)), exposure=frame.exposure_t,
                                  gt=str(gt_path.relative_to(output))))

    manifest = DatasetManifest(sequences=[SequenceEntry(
        name=args.name, period=schedule.period, exposures=schedule.exposures, frames=entries,
    )])
    path = save_manifest(manifest, output / "manifest.json")
    print(f"✅ 합성 완료: {len(entries)} 프레임, 노출 {schedule.exposures} → {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config) if args.config else TrainConfig.for_stage(args.stage or "coarse")
    overrides = config.to_dict()
    if args.stage:
        overrides["stage"] = args.stage
    if args.seed is not None:
        overrides["seed"] = args.seed
    overrides["device"] = args.device
    config = TrainConfig.from_dict(overrides)

    manifest = load_manifest(args.manifest)
    result = train_stage(config, manifest, args.output, init_checkpoint=args.init)
    print(f"✅ 학습 완료: {result.steps} step, 체크포인트 {result.checkpoint}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    manifest = load_manifest(args.manifest)
    sequence = load_sequence(manifest, args.sequence, with_targets=False)
    check_length(sequence)

    models = load_checkpoint(args.checkpoint, args.device)
    seed = args.seed if args.seed is not None else Settings.SEED
    reconstructor = VideoReconstructor.from_models(models, align=args.align, seed=seed)
    outputs = reconstructor.reconstruct(sequence)

    output = Path(args.output)
    records = []
    for frame in outputs:
        hdr_path = output / "hdr" / f"hdr_{frame.index:05d}.exr"
        write_hdr_frame(hdr_path, frame.radiance)
        write_preview(output / "previews" / f"preview_{frame.index:05d}.png", frame.radiance)
        records.append({"index": frame.index, "role": frame.role, "flag": frame.flag,
                        "path": str(hdr_path.relative_to(output))})
    with open(output / "reconstruction.json", "w", encoding="utf-8") as f:
        json.dump({"sequence": sequence.name, "runtime_ms_per_frame": reconstructor.runtime_ms_per_frame,
                   "frames": records}, f, ensure_ascii=False, indent=2)
    print(f"✅ 복원 완료: {len(outputs)} 프레임 → {output}")
    return EXIT_OK


def _roles_for_eval(args, count: int) -> List[str]:
    if args.manifest:
        entry = load_manifest(args.manifest).get(args.sequence)
        schedule = entry.schedule
    elif args.schedule:
        schedule = ExposureSchedule.from_preset(args.schedule)
    else:
        logger.warning("노출 스케줄 정보가 없어 모든 프레임을 middle 로 평가합니다.")
        return ["middle"] * count
    return [schedule.role_at(i) for i in range(count)]


def _runtime_for_eval(pred_dir: str) -> Optional[float]:
    """예측 디렉터리 상위의 reconstruction.json 에서 프레임당 복원 시간 읽기"""
    record = Path(pred_dir).parent / "reconstruction.json"
    if not record.exists():
        return None
    try:
        with open(record, "r", encoding="utf-8") as f:
            runtime = json.load(f).get("runtime_ms_per_frame")
    except json.JSONDecodeError as e:
        logger.warning(f"복원 기록을 읽지 못했습니다: {record}: {str(e)}")
        return None
    return float(runtime) if runtime is not None else None


def cmd_eval(args) -> int:
    pred_paths = list_frames(args.pred, HDR_EXTENSIONS)
    gt_paths = list_frames(args.gt, HDR_EXTENSIONS)
    if len(pred_paths) != len(gt_paths):
        raise ValueError(f"예측({len(pred_paths)})과 GT({len(gt_paths)}) 프레임 수가 다릅니다.")
    preds = [read_hdr_frame(p) for p in pred_paths]
    gts = [read_hdr_frame(p) for p in gt_paths]
    report = evaluate(preds, gts, _roles_for_eval(args, len(preds)),
                      runtime_ms_per_frame=_runtime_for_eval(args.pred))
    if not all(np.isfinite(s.psnr_mu) for s in report.frames):
        raise FloatingPointError("PSNR 계산 결과가 유한하지 않습니다.")

    output = Path(args.output)
    path = report.save(output / "eval_report.json")
    if args.plot:
        plot_report(report, output / "psnr.png")
    print(f"✅ 평가 완료: 평균 PSNR-μ {report.aggregates['all']:.2f} dB → {path}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "eval": cmd_eval,
}


def run(argv: Optional[List[str]] = None) -> int:
    """CLI 실행 후 종료 코드 반환"""
    parser = build_parser()
    try:
        args = parser.parse_args(_fold_list_options(list(sys.argv[1:] if argv is None else argv)))
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        print(f"❌ 설정 오류: {str(e)}")
        return EXIT_USAGE
    except FloatingPointError as e:
        print(f"❌ 수치 오류: {str(e)}")
        return EXIT_NUMERIC
    except (ValueError, IOError, FileNotFoundError) as e:
        print(f"❌ 데이터 오류: {str(e)}")
        return EXIT_DATA
