# 학습/복원 하네스 패키지
