#!/usr/bin/env python3
"""
교차 노출 LDR 비디오 → HDR 비디오 복원 시스템
- 인수가 있으면 명령행 인터페이스 (synth / train / reconstruct / eval)
- 인수가 없으면 Streamlit 결과 뷰어 (streamlit run main.py)
"""

import json
import logging
import sys
from pathlib import Path

# 환경변수 로드
from dotenv import load_dotenv
load_dotenv()

from config.settings import Settings

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


# ========================================
# Streamlit 뷰어
# ========================================

def main():
    """출력 디렉터리 결과 뷰어"""
    import pandas as pd
    import streamlit as st
    from PIL import Image

    from src.analyzers.evaluator import EvalReport, aggregates_to_dataframe, report_to_dataframe

    st.set_page_config(page_title="HDR 비디오 복원 결과", page_icon="🎞️", layout="wide")
    st.title("🎞️ HDR 비디오 복원 결과 뷰어")

    with st.sidebar:
        st.header("⚙️ 설정")
        output_dir = Path(st.text_input("출력 디렉터리", value=Settings.OUTPUT_DIR))
        st.caption(f"디바이스: {Settings.DEVICE} · μ={Settings.MU:g} · γ={Settings.GAMMA:g}")

    if not output_dir.exists():
        st.warning(f"⚠️ 출력 디렉터리가 없습니다: {output_dir}")
        return

    tab_eval, tab_curve, tab_preview = st.tabs(["📊 평가", "📈 학습 곡선", "🖼️ 미리보기"])

    with tab_eval:
        report_path = output_dir / "eval_report.json"
        if report_path.exists():
            try:
                report = EvalReport.load(report_path)
            except IOError as e:
                st.error(f"❌ {str(e)}")
            else:
                col1, col2 = st.columns([1, 2])
                with col1:
                    st.markdown("### 역할별 평균 PSNR-μ")
                    st.dataframe(aggregates_to_dataframe(report), use_container_width=True)
                    if report.runtime_ms_per_frame is not None:
                        st.metric("프레임당 처리 시간", f"{report.runtime_ms_per_frame:.1f} ms")
                with col2:
                    table = report_to_dataframe(report)
                    st.markdown("### 프레임별 PSNR-μ")
                    st.bar_chart(table.set_index("index")["psnr_mu"])
                    st.dataframe(table, use_container_width=True)
        else:
            st.info("💡 eval_report.json 이 없습니다. `python main.py eval ...` 으로 생성하세요.")

    with tab_curve:
        curves = sorted(output_dir.glob("training_curve_*.csv"))
        if curves:
            for curve in curves:
                data = pd.read_csv(curve)
                st.markdown(f"### {curve.stem.replace('training_curve_', '')}")
                st.line_chart(data.set_index("step")["loss"])
        else:
            st.info("💡 학습 곡선 CSV 가 없습니다.")

    with tab_preview:
        previews = sorted((output_dir / "previews").glob("preview_*.png"))
        flags = {}
        manifest_path = output_dir / "reconstruction.json"
        if manifest_path.exists():
            with open(manifest_path, "r", encoding="utf-8") as f:
                flags = {r["index"]: r for r in json.load(f).get("frames", [])}
        if previews:
            index = st.slider("프레임", 0, len(previews) - 1, 0)
            record = flags.get(index, {})
            st.image(Image.open(previews[index]),
                     caption=f"frame {index} · {record.get('role', '?')} · {record.get('flag', '?')}")
        else:
            st.info("💡 미리보기 PNG 가 없습니다. `python main.py reconstruct ...` 으로 생성하세요.")


# ========================================
# 메인 실행부
# ========================================

if __name__ == "__main__":
    # CLI 인수 확인
    if len(sys.argv) > 1:
        from src.harness.cli import run
        sys.exit(run(sys.argv[1:]))
    else:
        # Streamlit 앱 실행
        main()
