""" Unit tests for lexrank.lori subpackage """
