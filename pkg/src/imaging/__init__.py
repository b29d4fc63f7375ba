# 영상 처리 기본 모듈 패키지
