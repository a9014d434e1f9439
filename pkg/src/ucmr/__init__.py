"""Unsupervised conversational machine reading engine.

Pipeline stages: corpus ingestion -> sentence encoding -> topic
segmentation -> spectral rule extraction -> adversarial entailment
model -> dialog decision policy -> question generation, with an
evaluation harness, a session HTTP service, and a CLI on top.
"""

__version__ = "0.1.0"
