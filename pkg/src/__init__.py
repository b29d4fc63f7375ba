# 패키지 초기화 파일
import os

# OpenCV EXR 코덱은 cv2 import 이전에 활성화해야 한다
os.environ.setdefault("OPENCV_IO_ENABLE_OPENEXR", "1")
