from setuptools import setup, find_packages

from adlens.__version__ import VERSION

setup(name="adlens",
      version=VERSION,
      packages=find_packages(exclude=["tests"]),
      package_data={"adlens": ["data/*.txt", "data/*.psv", "data/modelspecs/*.json"]},
      install_requires=[line.strip() for line in open("requirements.txt") if line.strip()],
      entry_points={"console_scripts": ["adlens=adlens.__main__:main"]})
