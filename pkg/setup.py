"""
ABOUTME: Setup configuration for the weed-ipp package
ABOUTME: Defines package metadata, dependencies, and CLI entry points
"""

from setuptools import setup, find_packages
from pathlib import Path

# Read README for long description
readme_file = Path(__file__).parent / "README.md"
long_description = readme_file.read_text(encoding="utf-8") if readme_file.exists() else ""

# Runtime requirements; test tools go to the dev extra
TEST_PACKAGES = ("pytest", "pytest-cov", "pytest-mock")
requirements_file = Path(__file__).parent / "requirements.txt"
requirements = []
if requirements_file.exists():
    for line in requirements_file.read_text(encoding="utf-8").splitlines():
        req = line.split(" #", 1)[0].strip()
        if req and not req.startswith("#") and not req.startswith(TEST_PACKAGES):
            requirements.append(req)

setup(
    name="weed-ipp",
    version="0.1.0",
    author="Workspace Hub",
    author_email="noreply@workspace-hub.dev",
    description="Adaptive informative path planning over probabilistic weed maps, "
                "benchmarked against lawnmower coverage",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={
        "dev": [
            "pytest>=7.4.0",
            "pytest-cov>=4.1.0",
            "pytest-mock>=3.11.1",
        ],
    },
    entry_points={
        "console_scripts": [
            "weed-ipp=src.cli:main",
        ],
    },
    include_package_data=True,
    zip_safe=False,
    keywords=[
        "informative-path-planning",
        "occupancy-grid",
        "cma-es",
        "minimum-snap",
        "uav",
        "coverage",
    ],
)
