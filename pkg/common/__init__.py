"""Shared errors and random streams"""
