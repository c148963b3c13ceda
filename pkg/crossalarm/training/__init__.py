"""crossalarm - Training"""
