"""
Setup script for the Energy-Harvesting MAC toolkit.
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [
        line.split("#")[0].strip()
        for line in fh
        if line.strip() and not line.startswith("#")
    ]

DEV_TOOLS = ("pytest", "black", "flake8", "mypy", "bandit")

setup(
    name="ehmac",
    version="0.1.0",
    author="EHMAC Team",
    description="Version-update scheduling for energy-harvesting multiple-access users",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=("tests", "tests.*", "examples", "examples.*")),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.10",
    install_requires=[r for r in requirements if not r.startswith(DEV_TOOLS)],
    extras_require={"dev": [r for r in requirements if r.startswith(DEV_TOOLS)]},
    entry_points={
        "console_scripts": [
            "ehmac=ehmac.app:main",
        ],
    },
)
