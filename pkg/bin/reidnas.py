#!/usr/bin/env python3
from reidnas.cli import main

if __name__ == '__main__':
    main()
