"""
Collective QSV - Main source package
"""
