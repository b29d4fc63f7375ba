﻿# 생성 모듈 패키지
