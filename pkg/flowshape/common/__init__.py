"""Shared helpers: seeding, JSON files, run context"""
