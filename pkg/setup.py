# setup.py
from setuptools import setup
from setuptools import find_packages

# list dependencies from file
with open('requirements.txt') as f:
    content = f.readlines()
requirements = [x.strip() for x in content]


setup(name='mcfqkd',
      version='0.1.0',
      description="QKD / classical coexistence planner and simulator for multicore fiber",
      packages=find_packages(exclude=["tests"]), # NEW: find packages automatically
      install_requires=requirements,
      entry_points={
          "console_scripts": ["mcfqkd=FrontEnd.cli:main"],
      })
