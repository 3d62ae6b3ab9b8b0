# uavplan/commands/__init__.py
