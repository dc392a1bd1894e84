"""Configuration defaults and validation"""
