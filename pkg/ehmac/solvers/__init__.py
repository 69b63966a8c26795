"""
Numerical building blocks: rate region, barrier solver and perceptron.
"""
