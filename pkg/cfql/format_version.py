"""cfql dataset and tensor container format version"""
__format_version__ = 1
