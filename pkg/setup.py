"""Setup file for tnconvert"""

from setuptools import find_packages, setup

description = "Convert tensor networks between chain, train and grid topologies with SVD edge rewiring."

setup(
    name="tnconvert",
    version="0.1.1",
    description=description,
    long_description=description,
    packages=find_packages(include=["tnconvert", "tnconvert.*"]),
    classifiers=[
        "License :: OSI Approved :: Apache Software License",
        "Programming Language :: Python :: 3",
    ],
    python_requires=">=3.9",
    install_requires=[
        "click",
        "jsonlines",
        "loguru",
        "rich",
        "numpy",
        "pandas",
        "pydantic>=2",
        "tqdm",
    ],
    extras_require={
        "dev": [
            "black==24.3.0",
            "coverage",
            "pylint",
            "pytest",
            "hypothesis",
            "isort",
            "pyright",
            "mkdocs-material",
            "mkdocstrings[python]",
        ],
    },
    entry_points={
        "console_scripts": ["tnconvert=tnconvert.cli:cli"],
    },
    include_package_data=True,
)
