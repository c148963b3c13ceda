"""crossalarm - Risk and alarms"""
