#!/usr/bin/env python3
"""
Startup script for the Points2Pix pipeline
"""

import sys

from points2pix.config import settings
from points2pix.main import main

if __name__ == "__main__":
    print("🚀 Starting Points2Pix...")
    print(f"🧮 Precision: {settings.PRECISION}")
    print(f"📦 Presets: {settings.PRESETS_FILE}")
    print(f"🔧 Debug mode: {settings.DEBUG}")
    print(f"🧵 Worker threads: {settings.THREADS}")
    print("=" * 50)

    sys.exit(main())
