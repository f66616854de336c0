"""Finite function bases phi_1..phi_K on a 1D domain"""
