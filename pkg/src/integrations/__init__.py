﻿# 통합 모듈 패키지
