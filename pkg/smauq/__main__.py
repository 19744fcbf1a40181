from smauq.main import CLI

if __name__ == '__main__':
    CLI()
