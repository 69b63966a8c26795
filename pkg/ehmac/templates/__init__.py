"""
Report templates for command-line output.

Keeps all user-facing formatting in one place so handlers stay free of
string assembly.
"""
