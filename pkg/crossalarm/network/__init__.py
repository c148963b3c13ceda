"""crossalarm - Crossformer network"""
