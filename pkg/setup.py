import pathlib
from setuptools import setup
from typing import List

# Dynamically generate list of requirements from requirements.txt
def get_requirements() -> List[str]:
    with pathlib.Path('requirements.txt').open() as requirements:
        lines = [line.strip() for line in requirements]
        return [line for line in lines if line and not line.startswith('#')]


setup(
    name='subnet_forge',
    version='1.0',
    description='Task-specific lottery ticket subnetworks for small multi-task models',
    author='DataHel',
    author_email='',
    packages=[
        'subnet_forge',
        'subnet_forge.autodiff',
        'subnet_forge.models',
        'subnet_forge.synthetic',
    ],
    package_data={'subnet_forge': ['config/*']},
    py_modules=['subnet_forge_cli'],
    install_requires=get_requirements()
)
