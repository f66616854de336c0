"""Tensor algebra, rank estimation, TPF conversion and TNN training"""
