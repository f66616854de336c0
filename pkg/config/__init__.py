"""Settings and validated option models"""
