from setuptools import setup

setup(
    name="overlaysim",
    version="0.1.0",
    author="the overlaysim authors",
    license="MLP 2.0/EUPL 1.1",
    include_package_data=True,
    description="slot-level simulator of overlaid primary and cognitive "
    "ad hoc networks",
    long_description=open("README.rst").read(),
    packages=["overlaysim"],
    package_data={"overlaysim": ["data/*.yml"]},
    install_requires=[
        "libaaron",
        "pyyaml",
        "sqlalchemy[mypy]==1.4.44",
        "numpy",
        "scipy",
        "matplotlib",
    ],
    entry_points={"console_scripts": ["overlaysim=overlaysim.cli:main"]},
)
