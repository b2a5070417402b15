#!/usr/bin/env python3
"""
Скрипт для быстрой самопроверки сборки
"""
import os
import sys

# Добавляем путь к проекту
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from cli.main import main

if __name__ == "__main__":
    sys.exit(main(["selftest"] + sys.argv[1:]))
