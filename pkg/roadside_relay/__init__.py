# Roadside Relay - budget-constrained scheduling of sensor data relayed by passing vehicles
__version__ = "1.0.0"
