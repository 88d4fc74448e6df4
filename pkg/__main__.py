#!/usr/bin/env python
# coding=utf-8
from gat_gan.cli import run

if __name__ == '__main__':
    run()
