﻿# 분석 모듈 패키지
