# 신경망 모듈 패키지
