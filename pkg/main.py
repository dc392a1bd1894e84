#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Conformal keypoint pose uncertainty
Entry point: python main.py <subcommand> [options]
"""

import sys
import os

# Add the project root directory to the Python path
sys.path.insert(0, os.path.dirname(__file__))

from command.cli import main

if __name__ == '__main__':
    sys.exit(main())
