"""Logging, errors, permutations and file formats"""
