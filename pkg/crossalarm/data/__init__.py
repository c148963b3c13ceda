"""crossalarm - Data pipeline"""
