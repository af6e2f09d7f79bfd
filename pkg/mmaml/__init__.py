# Multi-step MAML package
