"""Experiment harness: configs, scenario builders, replication runs and result emission"""
