"""
Corridor Simulation Package
Vicsek, social-force and combined pedestrian dynamics in a periodic corridor
"""

__version__ = "1.0.0"
__description__ = "Self-propelled particle dynamics and order-disorder analysis for corridor flows"
